#include "loid/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#include "loid/error.hpp"

namespace loid {

double logit(double p) { return std::log(p) - std::log1p(-p); }

namespace {

double floored(double p, const char* what) {
  if (!std::isfinite(p) || p < 0.0) {
    throw NumericalError(std::string("preference score: ") + what + " probability must be finite and nonnegative");
  }
  return std::max(p, kProbabilityFloor);
}

}  // namespace

double preference_score(double p_positive, double p_negative) {
  const double a = floored(p_positive, "positive");
  const double b = floored(p_negative, "negative");
  return std::log(a) - std::log(b);
}

double preference_score_logit_form(double p_positive, double p_negative) {
  const double a = floored(p_positive, "positive");
  const double b = floored(p_negative, "negative");
  // logit(q) with 1 - q taken as b / (a + b): forming 1 - q by subtraction
  // cancels badly once q is near 1.
  const double q = a / (a + b);
  const double q_complement = b / (a + b);
  return std::log(q) - std::log(q_complement);
}

// ---------------------------------------------------------------------------
// Templates

namespace {

std::size_t count_placeholders(const std::string& t) {
  std::size_t n = 0;
  for (auto pos = t.find("{}"); pos != std::string::npos; pos = t.find("{}", pos + 2)) ++n;
  return n;
}

}  // namespace

TemplateSet::TemplateSet(std::vector<std::string> templates) : templates_(std::move(templates)) {
  if (templates_.empty()) throw ConfigError("template set is empty");
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    const auto n = count_placeholders(templates_[i]);
    if (n != 2) {
      throw ConfigError("template " + std::to_string(i) + " has " + std::to_string(n) +
                        " placeholders, expected 2: \"" + templates_[i] + "\"");
    }
  }
}

TemplateSet TemplateSet::defaults() {
  return TemplateSet({
      "The impact of {} on {} is ",
      "The relationship between {} and {} is ",
      "The role of {} in {} is ",
      "When considering {}, the effect on {} is ",
      "The correlation between {} and {} is ",
      "The influence of {} on {} is ",
      "The association between {} and {} is ",
      "The contribution of {} to {} is ",
      "Regarding {}, its effect on {} is ",
      "The effect of {} on {} is ",
  });
}

TemplateSet TemplateSet::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open template file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return TemplateSet(std::move(lines));
}

TemplateSet TemplateSet::prefix(std::size_t n_sent) const {
  if (n_sent == 0 || n_sent > templates_.size()) {
    throw ConfigError("n_sent " + std::to_string(n_sent) + " outside 1.." + std::to_string(templates_.size()));
  }
  return TemplateSet(std::vector<std::string>(templates_.begin(), templates_.begin() + static_cast<long>(n_sent)));
}

std::string TemplateSet::render(std::size_t index, const std::string& feature, const std::string& target) const {
  const std::string& t = templates_.at(index);
  const auto first = t.find("{}");
  const auto second = t.find("{}", first + 2);
  return t.substr(0, first) + feature + t.substr(first + 2, second - first - 2) + target + t.substr(second + 2);
}

std::vector<std::string> render_prompts(const std::string& feature_desc, const std::string& target_desc,
                                        const TemplateSet& ts) {
  std::vector<std::string> prompts;
  prompts.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) prompts.push_back(ts.render(i, feature_desc, target_desc));
  return prompts;
}

// ---------------------------------------------------------------------------
// Measurements

nlohmann::json ProbeMeasurement::to_json() const {
  return {{"feature", feature},       {"template_index", template_index}, {"prompt", prompt},
          {"p_positive", p_positive}, {"p_negative", p_negative},         {"score", score}};
}

ProbeMeasurement ProbeMeasurement::from_json(const nlohmann::json& j) {
  ProbeMeasurement m;
  try {
    m.feature = j.at("feature").get<std::string>();
    m.template_index = j.at("template_index").get<std::size_t>();
    m.prompt = j.value("prompt", std::string{});
    m.p_positive = j.at("p_positive").get<double>();
    m.p_negative = j.at("p_negative").get<double>();
    m.score = j.at("score").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("probe measurement: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Mock backend

namespace {

std::string lower_trim(const std::string& s) {
  const auto b = s.find_first_not_of(' ');
  std::string out = b == std::string::npos ? "" : s.substr(b);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

MockBackend::MockBackend(const nlohmann::json& fixture) {
  auto parse_entry = [](const nlohmann::json& j) {
    Entry e;
    if (j.contains("match")) {
      const auto& m = j.at("match");
      if (m.is_string()) {
        e.match.push_back(m.get<std::string>());
      } else {
        e.match = m.get<std::vector<std::string>>();
      }
    }
    if (j.contains("positive") || j.contains("negative")) {
      e.polarity = std::make_pair(j.at("positive").get<double>(), j.at("negative").get<double>());
    }
    if (j.contains("tokens")) e.tokens = j.at("tokens").get<std::map<std::string, double>>();
    if (!e.polarity && e.tokens.empty()) throw ConfigError("mock fixture entry needs positive/negative or tokens");
    return e;
  };
  try {
    model_id_ = fixture.value("model_id", std::string("mock"));
    for (const auto& e : fixture.value("entries", nlohmann::json::array())) entries_.push_back(parse_entry(e));
    if (fixture.contains("default")) default_ = parse_entry(fixture.at("default"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mock fixture: ") + e.what());
  }
}

MockBackend MockBackend::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock fixture " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("mock fixture " + path + ": " + e.what());
  }
  return MockBackend(j);
}

std::map<std::string, double> MockBackend::answer(const Entry& e, const std::vector<std::string>& tokens) const {
  std::map<std::string, double> out;
  if (e.polarity) {
    // Full polarity mass goes to the first requested variant.
    bool pos_done = false, neg_done = false;
    for (const auto& t : tokens) {
      const std::string canon = lower_trim(t);
      if (canon == "positive" && !pos_done) {
        out[t] = e.polarity->first;
        pos_done = true;
      } else if (canon == "negative" && !neg_done) {
        out[t] = e.polarity->second;
        neg_done = true;
      }
    }
  }
  for (const auto& t : tokens) {
    if (auto it = e.tokens.find(t); it != e.tokens.end()) out[t] = it->second;
  }
  return out;
}

std::map<std::string, double> MockBackend::score(const std::string& prompt, const std::vector<std::string>& tokens) {
  ++requests_;
  for (const auto& e : entries_) {
    const bool hit = std::all_of(e.match.begin(), e.match.end(),
                                 [&](const std::string& m) { return prompt.find(m) != std::string::npos; });
    if (hit) return answer(e, tokens);
  }
  if (default_) return answer(*default_, tokens);
  throw BackendError("mock backend: no fixture entry matches prompt \"" + prompt + "\"");
}

// ---------------------------------------------------------------------------
// Cache

std::string prompt_hash(const std::string& prompt) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : prompt) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ProbeCache::ProbeCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries_[{j.at("model").get<std::string>(), j.at("prompt").get<std::string>(), j.at("token").get<std::string>()}] =
          j.at("prob").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("probe cache " + path_ + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::optional<double> ProbeCache::get(const std::string& model, const std::string& prompt,
                                      const std::string& token) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find({model, prompt, token});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ProbeCache::put(const std::string& model, const std::string& prompt, const std::string& token, double prob) {
  std::lock_guard lock(mu_);
  entries_[{model, prompt, token}] = prob;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw ConfigError("cannot append to probe cache " + path_);
  nlohmann::json rec = {{"model", model}, {"prompt_hash", prompt_hash(prompt)}, {"prompt", prompt},
                        {"token", token}, {"prob", prob}};
  out << rec.dump() << '\n';
}

std::size_t ProbeCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Prober

Prober::Prober(ProbeBackend* backend, ProbeCache& cache, ProbeOptions opts, std::string model_id)
    : backend_(backend), cache_(cache), opts_(std::move(opts)), model_id_(std::move(model_id)) {
  if (model_id_.empty()) {
    if (!backend_) throw ConfigError("prober without backend needs a model id");
    model_id_ = backend_->model_id();
  }
  if (opts_.tokens.positive.empty() || opts_.tokens.negative.empty()) {
    throw ConfigError("each polarity needs at least one token variant");
  }
  if (opts_.max_in_flight == 0) opts_.max_in_flight = 1;
}

std::vector<std::string> Prober::all_tokens() const {
  std::vector<std::string> tokens = opts_.tokens.positive;
  for (const auto& t : opts_.tokens.negative) {
    if (std::find(tokens.begin(), tokens.end(), t) == tokens.end()) tokens.push_back(t);
  }
  return tokens;
}

std::map<std::string, double> Prober::fetch(const std::string& prompt, bool& fetched) {
  const auto tokens = all_tokens();
  std::map<std::string, double> probs;
  bool complete = true;
  for (const auto& t : tokens) {
    if (auto p = cache_.get(model_id_, prompt, t)) {
      probs[t] = *p;
    } else {
      complete = false;
    }
  }
  fetched = false;
  if (complete) return probs;
  if (!backend_) throw BackendError("probe cache has no entry for \"" + prompt + "\" and no backend is configured");

  ++backend_calls_;
  const auto answer = backend_->score(prompt, tokens);
  fetched = true;
  probs.clear();
  for (const auto& t : tokens) {
    auto it = answer.find(t);
    const double p = it == answer.end() ? 0.0 : it->second;
    if (!std::isfinite(p)) throw BackendError("backend returned a non-finite probability for token \"" + t + "\"");
    if (p < 0.0 || p > 1.0 + 1e-9) {
      throw BackendError("backend returned probability " + std::to_string(p) + " for token \"" + t + "\"");
    }
    probs[t] = p;
  }
  return probs;
}

void Prober::persist(const std::string& prompt, const std::map<std::string, double>& probs) {
  for (const auto& t : all_tokens()) cache_.put(model_id_, prompt, t, probs.at(t));
}

std::pair<double, double> Prober::polarity_mass(const std::map<std::string, double>& probs) const {
  double pos = 0.0, neg = 0.0;
  for (const auto& t : opts_.tokens.positive) pos += probs.at(t);
  for (const auto& t : opts_.tokens.negative) neg += probs.at(t);
  if (pos < kProbabilityFloor && neg < kProbabilityFloor) {
    throw BackendError("backend assigns no mass to either polarity; tokens are not scorable for this model");
  }
  return {pos, neg};
}

std::pair<double, double> Prober::score_tokens(const std::string& prompt) {
  bool fetched = false;
  const auto probs = fetch(prompt, fetched);
  if (fetched) persist(prompt, probs);
  return polarity_mass(probs);
}

std::vector<ProbeMeasurement> Prober::probe_feature(const FeatureMeta& feature, const std::string& target_desc,
                                                    const TemplateSet& ts) {
  const auto prompts = render_prompts(feature.prompt_text(opts_.use_descriptions), target_desc, ts);
  const std::size_t n = prompts.size();
  std::vector<std::map<std::string, double>> results(n);
  std::vector<char> fetched(n, 0);
  std::vector<std::exception_ptr> errors(n);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        bool f = false;
        results[i] = fetch(prompts[i], f);
        fetched[i] = f ? 1 : 0;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min(opts_.max_in_flight, n);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Persist in template order so concurrency never changes the cache file.
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i] && fetched[i]) persist(prompts[i], results[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }

  std::vector<ProbeMeasurement> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [pos, neg] = polarity_mass(results[i]);
    out.push_back({feature.name, i, prompts[i], pos, neg, preference_score(pos, neg)});
  }
  return out;
}

}  // namespace loid
