#pragma once

// Minimal built-in frontend. A full UI can be served instead from a
// directory passed to the server.

#include <string_view>

namespace annodesk::assets {

inline constexpr std::string_view kIndexHtml = R"html(<!doctype html>
<html lang="en">
<head><meta charset="utf-8"><title>annodesk</title></head>
<body>
<p id="msg">Loading...</p>
<script>
const token = new URLSearchParams(location.search).get("token");
if (!token) {
  document.getElementById("msg").textContent = "Open the link you were given.";
} else {
  fetch("/api/whoami?token=" + encodeURIComponent(token))
    .then(r => r.ok ? r.json() : Promise.reject(r.status))
    .then(me => {
      const page = me.role === "manager" ? "dashboard.html" : "annotate.html";
      location.replace(page + "?token=" + encodeURIComponent(token));
    })
    .catch(() => { document.getElementById("msg").textContent = "This link is not valid."; });
}
</script>
</body>
</html>
)html";

inline constexpr std::string_view kAnnotateHtml = R"html(<!doctype html>
<html lang="en">
<head><meta charset="utf-8"><title>annotate</title>
<style>body{font-family:sans-serif;max-width:60em;margin:1em auto}pre{white-space:pre-wrap}</style>
</head>
<body>
<h1>Annotation</h1>
<div id="item"></div>
<script>
const token = new URLSearchParams(location.search).get("token");
async function load() {
  const r = await fetch("/api/next-item?token=" + encodeURIComponent(token));
  const item = await r.json();
  const el = document.getElementById("item");
  if (item.status === "complete") {
    el.innerHTML = "<p>All done. Completion code:</p><pre></pre>";
    el.querySelector("pre").textContent = item.token;
    return;
  }
  el.innerHTML = "<pre></pre>";
  el.querySelector("pre").textContent = JSON.stringify(item, null, 2);
}
load();
</script>
</body>
</html>
)html";

inline constexpr std::string_view kDashboardHtml = R"html(<!doctype html>
<html lang="en">
<head><meta charset="utf-8"><title>dashboard</title>
<style>body{font-family:sans-serif;max-width:70em;margin:1em auto}pre{white-space:pre-wrap}</style>
</head>
<body>
<h1>Dashboard</h1>
<pre id="progress"></pre>
<button id="reveal">Show results</button>
<pre id="results"></pre>
<script>
const token = new URLSearchParams(location.search).get("token");
const q = "?token=" + encodeURIComponent(token);
fetch("/api/dashboard" + q).then(r => r.json()).then(d => {
  document.getElementById("progress").textContent = JSON.stringify(d.users, null, 2);
});
document.getElementById("reveal").onclick = () =>
  fetch("/api/reveal-results" + q, {method: "POST"}).then(r => r.json()).then(d => {
    document.getElementById("results").textContent = JSON.stringify(d, null, 2);
  });
</script>
</body>
</html>
)html";

}  // namespace annodesk::assets
