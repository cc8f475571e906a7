// annodesk: add campaigns, run the server, list campaigns.

#include <pthread.h>
#include <signal.h>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "annodesk/api_server.hpp"
#include "annodesk/store.hpp"

namespace {

struct Common {
  std::string data_dir = "./annodesk-data";
  std::string host = "127.0.0.1";
  int port = 8000;
};

void add_common(CLI::App* cmd, Common& c, bool network) {
  cmd->add_option("--data-dir", c.data_dir, "Directory holding campaign logs")
      ->envname("ANNODESK_DATA_DIR")
      ->capture_default_str();
  if (network) {
    cmd->add_option("--host", c.host, "Host name used in links and for listening")
        ->envname("ANNODESK_HOST")
        ->capture_default_str();
    cmd->add_option("--port", c.port, "TCP port")
        ->envname("ANNODESK_PORT")
        ->check(CLI::Range(0, 65535))
        ->capture_default_str();
  }
}

std::string base_url(const Common& c, int port) {
  return "http://" + c.host + ":" + std::to_string(port);
}

int cmd_add(const Common& c, const std::string& file) {
  std::string raw;
  try {
    raw = annodesk::read_file(file);
  } catch (const annodesk::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  try {
    annodesk::Registry registry(c.data_dir);
    annodesk::Campaign& campaign = registry.add(raw);
    const annodesk::CampaignLinks links = campaign.links(base_url(c, c.port));
    for (const auto& l : links.annotators)
      std::cout << "annotator " << l.identity.user_id << " " << l.url << "\n";
    std::cout << "dashboard " << links.manager.identity.user_id << " " << links.manager.url << "\n";
    return 0;
  } catch (const annodesk::Error& e) {
    std::cerr << "error (" << annodesk::to_string(e.kind()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_run(const Common& c, std::size_t threads, const std::string& static_dir, bool print_links) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  annodesk::Registry registry(c.data_dir);
  try {
    for (const auto& w : registry.load()) std::cerr << "warning: " << w << "\n";
  } catch (const annodesk::Error& e) {
    std::cerr << "error: refusing to start: " << e.what() << "\n";
    return 1;
  }

  annodesk::ServerOptions opts;
  opts.host = c.host;
  opts.port = c.port;
  opts.threads = threads;
  opts.static_dir = static_dir;
  annodesk::ApiServer server(registry, opts);
  int port = 0;
  try {
    port = server.bind();
  } catch (const annodesk::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  const std::string base = base_url(c, port);
  for (annodesk::Campaign* campaign : registry.campaigns()) {
    const auto links = campaign->links(base);
    const auto [done, total] = campaign->progress();
    std::cout << "campaign " << campaign->id() << " " << done << "/" << total << "\n";
    if (print_links)
      for (const auto& l : links.annotators)
        std::cout << "annotator " << l.identity.user_id << " " << l.url << "\n";
    std::cout << "dashboard " << links.manager.identity.user_id << " " << links.manager.url << "\n";
  }
  std::cout << "listening on " << base << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.serve();
  // serve() also returns when the listener fails; wake the waiter then.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cout << "stopped" << std::endl;
  return 0;
}

int cmd_list(const Common& c) {
  annodesk::Registry registry(c.data_dir, annodesk::system_clock_ms,
                              annodesk::Registry::Access::read_only);
  try {
    for (const auto& w : registry.load()) std::cerr << "warning: " << w << "\n";
  } catch (const annodesk::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << std::left << std::setw(32) << "campaign" << std::setw(15) << "assignment"
            << std::setw(8) << "protocol" << std::right << std::setw(11) << "annotators"
            << std::setw(8) << "items" << std::setw(8) << "done" << std::setw(9) << "percent"
            << "\n";
  for (annodesk::Campaign* campaign : registry.campaigns()) {
    const annodesk::CampaignState s = campaign->snapshot();
    const auto [done, total] = annodesk::campaign_progress(s.def, s.assignment);
    std::ostringstream pct;
    pct << std::fixed << std::setprecision(1)
        << (total == 0 ? 0.0 : 100.0 * static_cast<double>(done) / static_cast<double>(total));
    std::cout << std::left << std::setw(32) << s.def.campaign_id << std::setw(15)
              << annodesk::to_string(s.def.info.assignment) << std::setw(8)
              << annodesk::to_string(s.def.info.protocol) << std::right << std::setw(11)
              << s.annotators.size() << std::setw(8) << total << std::setw(8) << done
              << std::setw(9) << pct.str() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human evaluation campaigns for machine translation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ANNODESK_VERSION));

  Common add_opts;
  std::string file;
  auto* add = app.add_subcommand("add", "Validate a campaign file, store it and print its links");
  add->add_option("file", file, "Campaign definition (JSON)")->required();
  add_common(add, add_opts, true);

  Common run_opts;
  std::size_t threads = 64;
  std::string static_dir;
  bool print_links = false;
  auto* run = app.add_subcommand("run", "Replay all campaigns and serve them");
  add_common(run, run_opts, true);
  run->add_option("--threads", threads, "Request worker threads")->capture_default_str();
  run->add_option("--static-dir", static_dir, "Serve the frontend from this directory");
  run->add_flag("--print-links", print_links, "Also print every annotator link");

  Common list_opts;
  auto* list = app.add_subcommand("list", "Show campaigns and their completion");
  add_common(list, list_opts, false);

  CLI11_PARSE(app, argc, argv);

  if (*add) return cmd_add(add_opts, file);
  if (*run) return cmd_run(run_opts, threads, static_dir, print_links);
  if (*list) return cmd_list(list_opts);
  return 1;
}
