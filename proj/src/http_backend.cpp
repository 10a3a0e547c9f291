#include <chrono>
#include <cmath>
#include <thread>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "loid/error.hpp"
#include "loid/probe.hpp"

#include <httplib.h>

namespace loid {

HttpBackend::HttpBackend(HttpBackendOptions opts) : opts_(std::move(opts)) {
  const std::string& url = opts_.url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("backend url must include a scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http") throw ConfigError("backend url scheme '" + scheme + "' is not supported (http only)");
  const auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (opts_.max_retries < 0) opts_.max_retries = 0;
}

std::map<std::string, double> HttpBackend::score(const std::string& prompt, const std::vector<std::string>& tokens) {
  const nlohmann::json body = {{"prompt", prompt}, {"tokens", tokens}};
  const std::string payload = body.dump();
  const auto timeout = std::chrono::duration<double>(opts_.timeout_seconds);

  std::string last_error;
  for (int attempt = 0; attempt <= opts_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 << std::min(attempt - 1, 6)));
    httplib::Client client(origin_);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    auto res = client.Post(path_, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw BackendError("backend " + opts_.url + " answered HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    std::map<std::string, double> out;
    try {
      const auto j = nlohmann::json::parse(res->body);
      for (const auto& [token, lp] : j.at("logprobs").items()) {
        if (lp.is_null()) continue;
        const double logp = lp.get<double>();
        if (std::isnan(logp)) throw BackendError("backend returned NaN log-probability for \"" + token + "\"");
        out[token] = std::exp(logp);
      }
    } catch (const nlohmann::json::exception& e) {
      throw BackendError("backend " + opts_.url + " returned malformed JSON: " + e.what());
    }
    return out;
  }
  throw BackendError("backend " + opts_.url + " unreachable after " + std::to_string(opts_.max_retries + 1) +
                     " attempts: " + last_error);
}

}  // namespace loid
