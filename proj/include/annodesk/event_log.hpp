#pragma once

// Append-only campaign log.
//
// On-disk record framing, repeated until end of file:
//
//   u32 little-endian  body length in bytes
//   u32 little-endian  CRC-32 (zlib polynomial) of the body
//   body               UTF-8 JSON object:
//                      {"sequence","campaign_id","timestamp","kind","body"}
//
// Sequences start at 1 and increase by one per record. A damaged final
// record (short header, short body or checksum mismatch on the last record)
// is a torn write and is dropped on replay; damage anywhere else refuses the log.

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "annodesk/campaign.hpp"
#include "annodesk/errors.hpp"

namespace annodesk {

enum class EventKind {
  campaign_added,
  links_generated,
  item_issued,
  annotation_submitted,
  rule_outcome,
  tutorial_skip,
  tasks_redistributed,
  results_revealed,
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::campaign_added: return "campaign_added";
    case EventKind::links_generated: return "links_generated";
    case EventKind::item_issued: return "item_issued";
    case EventKind::annotation_submitted: return "annotation_submitted";
    case EventKind::rule_outcome: return "rule_outcome";
    case EventKind::tutorial_skip: return "tutorial_skip";
    case EventKind::tasks_redistributed: return "tasks_redistributed";
    case EventKind::results_revealed: return "results_revealed";
  }
  return "";
}

inline std::optional<EventKind> event_kind_from_string(std::string_view s) {
  for (EventKind k : {EventKind::campaign_added, EventKind::links_generated,
                      EventKind::item_issued, EventKind::annotation_submitted,
                      EventKind::rule_outcome, EventKind::tutorial_skip,
                      EventKind::tasks_redistributed, EventKind::results_revealed})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

struct StoredEvent {
  std::uint64_t sequence = 0;
  std::string campaign_id;
  std::int64_t timestamp = 0;  // server wall clock, ms since the Unix epoch
  EventKind kind = EventKind::campaign_added;
  Json body = Json::object();

  bool operator==(const StoredEvent&) const = default;
};

inline constexpr std::size_t kFrameHeaderBytes = 8;

inline std::string encode_body(const StoredEvent& e) {
  Json j;
  j["sequence"] = e.sequence;
  j["campaign_id"] = e.campaign_id;
  j["timestamp"] = e.timestamp;
  j["kind"] = to_string(e.kind);
  j["body"] = e.body;
  return j.dump();
}

inline std::uint32_t checksum(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

/// Header plus body, ready to append.
inline std::string encode_frame(const StoredEvent& e) {
  const std::string body = encode_body(e);
  const std::uint32_t len = static_cast<std::uint32_t>(body.size());
  const std::uint32_t crc = checksum(body);
  std::string frame(kFrameHeaderBytes, '\0');
  for (int i = 0; i < 4; ++i) {
    frame[i] = static_cast<char>((len >> (8 * i)) & 0xFF);
    frame[4 + i] = static_cast<char>((crc >> (8 * i)) & 0xFF);
  }
  return frame + body;
}

struct LogContents {
  std::vector<StoredEvent> events;
  std::size_t valid_bytes = 0;  // offset just past the last intact record
  std::string frames;           // the intact records, verbatim
  std::vector<std::string> warnings;
};

/// Decodes a log image. Throws Error(io) naming the sequence number when a
/// record other than the last one is damaged.
inline LogContents read_log(std::string_view bytes) {
  LogContents out;
  std::size_t offset = 0;
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
    return v;
  };
  auto corrupted = [&](const std::string& why) {
    return Error(ErrorKind::io, "corrupted log record at sequence " +
                                    std::to_string(out.events.size() + 1) + " (byte " +
                                    std::to_string(offset) + "): " + why);
  };

  while (offset < bytes.size()) {
    const std::size_t remaining = bytes.size() - offset;
    if (remaining < kFrameHeaderBytes) {
      out.warnings.push_back("discarded torn trailing record header (" +
                             std::to_string(remaining) + " bytes)");
      break;
    }
    const std::uint32_t len = u32(offset);
    const std::uint32_t crc = u32(offset + 4);
    if (len > remaining - kFrameHeaderBytes) {
      out.warnings.push_back("discarded torn trailing record (" + std::to_string(remaining) +
                             " of " + std::to_string(len + kFrameHeaderBytes) + " bytes)");
      break;
    }
    const std::string_view body = bytes.substr(offset + kFrameHeaderBytes, len);
    const bool last = offset + kFrameHeaderBytes + len == bytes.size();
    if (checksum(body) != crc) {
      if (last) {
        out.warnings.push_back("discarded trailing record with a bad checksum");
        break;
      }
      throw corrupted("checksum mismatch");
    }
    StoredEvent e;
    try {
      Json j = Json::parse(body);
      e.sequence = j.at("sequence").get<std::uint64_t>();
      e.campaign_id = j.at("campaign_id").get<std::string>();
      e.timestamp = j.at("timestamp").get<std::int64_t>();
      auto kind = event_kind_from_string(j.at("kind").get<std::string>());
      if (!kind) throw corrupted("unknown event kind");
      e.kind = *kind;
      e.body = std::move(j.at("body"));
    } catch (const nlohmann::json::exception& ex) {
      throw corrupted(ex.what());
    }
    if (e.sequence != out.events.size() + 1) throw corrupted("sequence gap");
    out.events.push_back(std::move(e));
    offset += kFrameHeaderBytes + len;
    out.valid_bytes = offset;
  }
  out.frames.assign(bytes.substr(0, out.valid_bytes));
  return out;
}

inline std::string read_file(const std::string& path) {
  const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) throw Error(ErrorKind::io, "cannot open " + path + ": " + std::strerror(errno));
  std::string data;
  char buf[1 << 16];
  for (;;) {
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw Error(ErrorKind::io, "cannot read " + path + ": " + std::strerror(err));
    }
    if (n == 0) break;
    data.append(buf, static_cast<std::size_t>(n));
  }
  ::close(fd);
  return data;
}

/// Single writer for one log file. Holds an exclusive advisory lock for its
/// lifetime; every append is written and fdatasync'ed before returning.
class LogWriter {
 public:
  enum class Mode { create_new, open_existing };

  LogWriter(std::string path, Mode mode, bool lock = true) : path_(std::move(path)) {
    int flags = O_WRONLY | O_APPEND | O_CLOEXEC;
    if (mode == Mode::create_new) flags |= O_CREAT | O_EXCL;
    fd_ = ::open(path_.c_str(), flags, 0644);
    if (fd_ < 0) {
      const int err = errno;
      if (err == EEXIST) throw Error(ErrorKind::conflict, "log already exists: " + path_);
      throw Error(ErrorKind::io, "cannot open " + path_ + ": " + std::strerror(err));
    }
    if (lock && ::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw Error(ErrorKind::io, "log is locked by another process: " + path_);
    }
    struct stat st {};
    if (::fstat(fd_, &st) == 0 && S_ISREG(st.st_mode)) size_ = static_cast<std::size_t>(st.st_size);
  }

  LogWriter(const LogWriter&) = delete;
  LogWriter& operator=(const LogWriter&) = delete;
  LogWriter(LogWriter&& other) noexcept
      : path_(std::move(other.path_)), fd_(std::exchange(other.fd_, -1)), size_(other.size_) {}
  LogWriter& operator=(LogWriter&& other) noexcept {
    if (this != &other) {
      close();
      path_ = std::move(other.path_);
      fd_ = std::exchange(other.fd_, -1);
      size_ = other.size_;
    }
    return *this;
  }
  ~LogWriter() { close(); }

  /// Cuts a torn tail so new records follow the last intact one.
  void truncate(std::size_t valid_bytes) {
    if (valid_bytes < size_) {
      if (::ftruncate(fd_, static_cast<off_t>(valid_bytes)) != 0)
        throw Error(ErrorKind::io, "cannot truncate " + path_ + ": " + std::strerror(errno));
      size_ = valid_bytes;
    }
  }

  void append(const StoredEvent& e) { append_frame(encode_frame(e)); }

  void append_frame(std::string_view frame) {
    if (fd_ < 0) throw Error(ErrorKind::io, "log is closed: " + path_);
    std::size_t written = 0;
    while (written < frame.size()) {
      const ssize_t n = ::write(fd_, frame.data() + written, frame.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        const int err = errno;
        if (written > 0 && ::ftruncate(fd_, static_cast<off_t>(size_)) != 0) {
          // the torn tail stays; replay drops it
        }
        throw Error(ErrorKind::io, "write to " + path_ + " failed: " + std::strerror(err));
      }
      written += static_cast<std::size_t>(n);
    }
    if (::fdatasync(fd_) != 0)
      throw Error(ErrorKind::io, "fdatasync on " + path_ + " failed: " + std::strerror(errno));
    size_ += frame.size();
  }

  const std::string& path() const { return path_; }
  std::size_t size() const { return size_; }

 private:
  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  std::string path_;
  int fd_ = -1;
  std::size_t size_ = 0;
};

}  // namespace annodesk
