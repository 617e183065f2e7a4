#include "deepnose/pubchem.hpp"

#include <filesystem>

#include <httplib.h>

#include "deepnose/common.hpp"

namespace deepnose {

namespace {

std::string substitute_cid(const std::string& tmpl, std::uint32_t cid) {
  std::string out = tmpl;
  const std::string key = "{cid}";
  std::size_t pos;
  while ((pos = out.find(key)) != std::string::npos) out.replace(pos, key.size(), std::to_string(cid));
  return out;
}

// splits "https://host/path?query" into (scheme://host, /path?query)
std::pair<std::string, std::string> split_url(const std::string& url) {
  std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) raise(ErrorKind::InvalidConfig, "endpoint lacks a scheme: " + url);
  std::size_t path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string http_get(const std::string& url, int timeout_seconds) {
  auto [origin, path] = split_url(url);
  httplib::Client client(origin);
  client.set_connection_timeout(timeout_seconds);
  client.set_read_timeout(timeout_seconds);
  client.set_follow_location(true);
  httplib::Result res = client.Get(path);
  if (!res) raise(ErrorKind::HttpFailure, "no response from " + origin);
  if (res->status != 200) raise(ErrorKind::HttpFailure, "status " + std::to_string(res->status) + " from " + url);
  if (res->body.empty()) raise(ErrorKind::NoRecord, "empty body from " + url);
  return res->body;
}

}  // namespace

std::string cache_path_for(std::uint32_t cid, const FetchOptions& options) {
  return options.cache_dir + "/" + std::to_string(cid) + ".sdf";
}

std::string fetch_pubchem_sdf(std::uint32_t cid, const FetchOptions& options) {
  if (cid == 0) raise(ErrorKind::InvalidConfig, "cid must be positive");

  std::string path = cache_path_for(cid, options);
  if (std::filesystem::exists(path)) return read_text_file(path);

  if (!options.network_enabled)
    raise(ErrorKind::InvalidConfig,
          "cid " + std::to_string(cid) + " not cached and network access is disabled (pass --enable-network)");

  std::string body = http_get(substitute_cid(options.endpoint, cid), options.timeout_seconds);
  write_file_atomic(path, body);
  return body;
}

FetchReport fetch_pubchem_batch(const std::vector<std::uint32_t>& cids, const FetchOptions& options) {
  FetchReport report;
  for (std::uint32_t cid : cids) {
    bool cached = cid != 0 && std::filesystem::exists(cache_path_for(cid, options));
    try {
      fetch_pubchem_sdf(cid, options);
      if (cached)
        ++report.cache_hits;
      else
        ++report.downloaded;
    } catch (const Error& e) {
      report.failures.push_back({cid, e.what()});
    }
  }
  return report;
}

}  // namespace deepnose
