#include "lsd/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lsd/errors.hpp"

namespace lsd {

namespace {

using nlohmann::json;

// Walks one JSON object, rejecting unknown keys and reporting errors with
// their JSON path and, when the raw text is at hand, the line of the key.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path, const std::string& text)
      : obj_(obj), path_(std::move(path)), text_(text) {
    if (!obj_.is_object()) fail(path_.empty() ? "/" : path_, "expected an object");
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : obj_.items())
      if (!allowed.contains(key)) fail(path_ + "/" + key, "unknown key");
  }

  bool has(const char* key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }
  const json& raw(const char* key) const { return obj_.at(key); }
  std::string child(const char* key) const { return path_ + "/" + key; }

  template <typename T>
  T get(const char* key, const T& fallback) const {
    if (!has(key)) return fallback;
    return as<T>(key);
  }

  template <typename T>
  T require(const char* key) const {
    if (!has(key)) fail(child(key), "missing required key");
    return as<T>(key);
  }

  [[noreturn]] void fail(const std::string& where, const std::string& what) const {
    std::ostringstream msg;
    msg << "config error at " << where;
    if (const int line = locate(where); line > 0) msg << " (line " << line << ")";
    msg << ": " << what;
    throw ConfigError(msg.str());
  }

 private:
  template <typename T>
  T as(const char* key) const {
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(child(key), "wrong value type");
    }
  }

  // First line containing the quoted last path component.
  int locate(const std::string& where) const {
    if (text_.empty()) return 0;
    const auto slash = where.find_last_of('/');
    const std::string needle = "\"" + where.substr(slash + 1) + "\"";
    const auto pos = text_.find(needle);
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + pos, '\n'));
  }

  const json& obj_;
  std::string path_;
  const std::string& text_;
};

json noise_to_json(const NoiseSchedule& noise) {
  if (noise.kind() == NoiseSchedule::Kind::linear)
    return {{"kind", "linear"}, {"rate", noise.rate()}};
  return {{"kind", "geometric"},
          {"sigma_bar_min", noise.sigma_bar_min()},
          {"sigma_bar_max", noise.sigma_bar_max()}};
}

NoiseSchedule noise_from_json(const ObjectReader& r, double t_max) {
  r.allow_only({"kind", "rate", "sigma_bar_min", "sigma_bar_max"});
  const auto kind = r.get<std::string>("kind", "geometric");
  try {
    if (kind == "linear") return NoiseSchedule::linear(r.get<double>("rate", 1.0), t_max);
    if (kind == "geometric")
      return NoiseSchedule::geometric(r.get<double>("sigma_bar_min", 1e-4),
                                      r.get<double>("sigma_bar_max", 20.0), t_max);
  } catch (const DomainError& e) {
    r.fail(r.child("kind"), e.what());
  }
  r.fail(r.child("kind"), "expected 'linear' or 'geometric'");
}

}  // namespace

ScoreOracle Problem::make_oracle() const {
  return ScoreOracle(distribution, noise, diffusion, smoothing);
}

std::optional<CountdownSpec> Problem::rule() const {
  if (task == "countdown") return countdown;
  return std::nullopt;
}

json Problem::to_json() const {
  json task_json;
  if (task == "countdown") {
    task_json = {{"type", "countdown"},
                 {"seq_len", countdown.seq_len},
                 {"vocab", countdown.vocab},
                 {"zeros", std::string(to_string(countdown.zeros))}};
  } else {
    task_json = {{"type", "custom-distribution"}, {"distribution", distribution.to_json()}};
  }
  return {{"task", task_json},
          {"diffusion", std::string(to_string(diffusion))},
          {"noise", noise_to_json(noise)},
          {"T", noise.t_max()},
          {"score_smoothing", smoothing}};
}

Problem Problem::from_json(const json& doc) {
  try {
    Problem p;
    const auto& task = doc.at("task");
    p.task = task.at("type").get<std::string>();
    if (p.task == "countdown") {
      p.countdown.seq_len = task.at("seq_len").get<int>();
      p.countdown.vocab = task.at("vocab").get<int>();
      p.countdown.zeros = parse_zero_placement(task.at("zeros").get<std::string>());
      p.distribution = countdown_distribution(p.countdown);
    } else if (p.task == "custom-distribution") {
      p.distribution = DataDistribution::from_json(task.at("distribution"));
      p.distribution_inline = true;
    } else {
      throw SchemaError("unknown task type " + p.task);
    }
    p.diffusion = parse_diffusion_kind(doc.at("diffusion").get<std::string>());
    const double t_max = doc.at("T").get<double>();
    const auto& noise = doc.at("noise");
    if (noise.at("kind").get<std::string>() == "linear")
      p.noise = NoiseSchedule::linear(noise.at("rate").get<double>(), t_max);
    else
      p.noise = NoiseSchedule::geometric(noise.at("sigma_bar_min").get<double>(),
                                         noise.at("sigma_bar_max").get<double>(), t_max);
    p.smoothing = doc.at("score_smoothing").get<double>();
    return p;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed problem description: ") + e.what());
  } catch (const ConfigError& e) {
    throw SchemaError(e.what());
  } catch (const DomainError& e) {
    throw SchemaError(e.what());
  }
}

RunConfig RunConfig::from_json(const json& doc, const std::filesystem::path& base_dir,
                               const std::string& text) {
  RunConfig cfg;
  cfg.base_dir = base_dir;
  const ObjectReader root(doc, "", text);
  root.allow_only({"task", "diffusion", "noise", "score_smoothing", "method", "distill", "eval",
                   "output_dir", "seed"});

  // distill first: T is shared with the noise schedule
  if (root.has("distill")) {
    const ObjectReader d(root.raw("distill"), "/distill", text);
    d.allow_only({"teacher_steps", "student_steps", "T", "epsilon", "eta", "grad_clip",
                  "epochs", "kappa_epochs", "n_samples", "zeta", "sampler"});
    auto& dc = cfg.distill;
    dc.teacher_steps = d.get<int>("teacher_steps", dc.teacher_steps);
    dc.student_steps = d.get<int>("student_steps", dc.student_steps);
    dc.t_max = d.get<double>("T", dc.t_max);
    dc.epsilon = d.get<double>("epsilon", dc.epsilon);
    dc.eta = d.get<double>("eta", dc.eta);
    dc.grad_clip = d.get<double>("grad_clip", dc.grad_clip);
    dc.epochs = d.get<int>("epochs", dc.epochs);
    dc.kappa_epochs = d.get<int>("kappa_epochs", dc.epochs);
    dc.n_samples = d.get<int>("n_samples", dc.n_samples);
    if (d.has("zeta")) cfg.zeta = d.get<int>("zeta", 0);
    try {
      dc.sampler = parse_sampler_kind(d.get<std::string>("sampler", "euler"));
      dc.validate();
    } catch (const ConfigError& e) {
      d.fail("/distill", e.what());
    }
  }

  auto& p = cfg.problem;
  {
    if (!root.has("task")) root.fail("/task", "missing required key");
    const ObjectReader t(root.raw("task"), "/task", text);
    p.task = t.require<std::string>("type");
    if (p.task == "countdown") {
      t.allow_only({"type", "seq_len", "vocab", "zeros"});
      p.countdown.seq_len = t.get<int>("seq_len", 6);
      p.countdown.vocab = t.get<int>("vocab", 4);
      try {
        p.countdown.zeros = parse_zero_placement(t.get<std::string>("zeros", "transparent"));
        p.distribution = countdown_distribution(p.countdown);
      } catch (const std::exception& e) {
        t.fail("/task", e.what());
      }
    } else if (p.task == "custom-distribution") {
      t.allow_only({"type", "path", "distribution"});
      try {
        if (t.has("distribution")) {
          p.distribution = DataDistribution::from_json(t.raw("distribution"));
          p.distribution_inline = true;
        } else {
          p.distribution_path = t.require<std::string>("path");
          std::filesystem::path dp = p.distribution_path;
          if (dp.is_relative()) dp = base_dir / dp;
          p.distribution = DataDistribution::load(dp);
        }
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        t.fail("/task", e.what());
      }
    } else {
      t.fail("/task/type", "expected 'countdown' or 'custom-distribution'");
    }
  }

  try {
    p.diffusion = parse_diffusion_kind(root.get<std::string>("diffusion", "absorbing"));
  } catch (const ConfigError& e) {
    root.fail("/diffusion", e.what());
  }
  if (root.has("noise")) {
    p.noise = noise_from_json(ObjectReader(root.raw("noise"), "/noise", text), cfg.distill.t_max);
  } else {
    p.noise = NoiseSchedule::geometric(1e-4, 20.0, cfg.distill.t_max);
  }
  p.smoothing = root.get<double>("score_smoothing", p.smoothing);
  if (!(p.smoothing >= 0.0 && p.smoothing < 1.0))
    root.fail("/score_smoothing", "must lie in [0, 1)");

  cfg.method = root.get<std::string>("method", cfg.method);
  if (cfg.method != "lsd" && cfg.method != "lsd+") root.fail("/method", "expected 'lsd' or 'lsd+'");

  if (cfg.zeta && (*cfg.zeta < 0 || *cfg.zeta > p.distribution.seq_len))
    root.fail("/distill/zeta", "must lie in [0, seq_len]");

  if (root.has("eval")) {
    const ObjectReader e(root.raw("eval"), "/eval", text);
    e.allow_only({"nfe", "n_eval_samples", "n_loss_samples", "include_teacher", "record_timing",
                  "learned"});
    auto& ec = cfg.eval;
    ec.nfe = e.get<std::vector<int>>("nfe", ec.nfe);
    ec.n_eval_samples = e.get<int>("n_eval_samples", ec.n_eval_samples);
    ec.n_loss_samples = e.get<int>("n_loss_samples", ec.n_loss_samples);
    ec.include_teacher = e.get<bool>("include_teacher", ec.include_teacher);
    ec.record_timing = e.get<bool>("record_timing", ec.record_timing);
    if (e.has("learned")) {
      const auto& learned = e.raw("learned");
      if (learned.is_string()) {
        ec.learned = learned.get<std::string>();
        if (ec.learned != "none" && ec.learned != "train")
          e.fail("/eval/learned", "expected 'none', 'train' or an object mapping NFE to artifact");
      } else if (learned.is_object()) {
        ec.learned = "artifacts";
        for (const auto& [key, value] : learned.items()) {
          int nfe = 0;
          try {
            nfe = std::stoi(key);
          } catch (const std::exception&) {
            e.fail("/eval/learned/" + key, "keys must be integer NFE values");
          }
          if (!value.is_string()) e.fail("/eval/learned/" + key, "artifact path must be a string");
          ec.artifacts[nfe] = value.get<std::string>();
        }
      } else {
        e.fail("/eval/learned", "expected a string or an object");
      }
    }
    if (ec.nfe.empty()) e.fail("/eval/nfe", "must not be empty");
    for (int n : ec.nfe)
      if (n < 1) e.fail("/eval/nfe", "NFE values must be positive");
    if (ec.n_eval_samples < 1) e.fail("/eval/n_eval_samples", "must be positive");
    if (ec.n_loss_samples < 0) e.fail("/eval/n_loss_samples", "must be nonnegative");
    if (ec.learned == "train")
      for (int n : ec.nfe)
        if (cfg.distill.teacher_steps % n != 0)
          e.fail("/eval/nfe", "every NFE must divide teacher_steps when learned = 'train'");
  }

  cfg.output_dir = root.get<std::string>("output_dir", cfg.output_dir);
  if (root.has("seed")) cfg.seed = root.get<std::uint64_t>("seed", 0);
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto offset = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + offset, '\n'));
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": JSON parse error: " + e.what());
  }
  try {
    return from_json(doc, path.parent_path(), text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json RunConfig::to_json() const {
  const auto& dc = distill;
  json task_json;
  if (problem.task == "countdown") {
    task_json = problem.to_json()["task"];
  } else if (problem.distribution_inline) {
    task_json = {{"type", "custom-distribution"}, {"distribution", problem.distribution.to_json()}};
  } else {
    task_json = {{"type", "custom-distribution"}, {"path", problem.distribution_path}};
  }
  json learned;
  if (eval.learned == "artifacts") {
    learned = json::object();
    for (const auto& [nfe, path] : eval.artifacts) learned[std::to_string(nfe)] = path;
  } else {
    learned = eval.learned;
  }
  json doc = {
      {"task", task_json},
      {"diffusion", std::string(to_string(problem.diffusion))},
      {"noise", noise_to_json(problem.noise)},
      {"score_smoothing", problem.smoothing},
      {"method", method},
      {"distill",
       {{"teacher_steps", dc.teacher_steps},
        {"student_steps", dc.student_steps},
        {"T", dc.t_max},
        {"epsilon", dc.epsilon},
        {"eta", dc.eta},
        {"grad_clip", dc.grad_clip},
        {"epochs", dc.epochs},
        {"kappa_epochs", dc.kappa_epochs},
        {"n_samples", dc.n_samples},
        {"zeta", zeta ? json(*zeta) : json(nullptr)},
        {"sampler", std::string(to_string(dc.sampler))}}},
      {"eval",
       {{"nfe", eval.nfe},
        {"n_eval_samples", eval.n_eval_samples},
        {"n_loss_samples", eval.n_loss_samples},
        {"include_teacher", eval.include_teacher},
        {"record_timing", eval.record_timing},
        {"learned", learned}}},
      {"output_dir", output_dir},
      {"seed", seed ? json(*seed) : json(nullptr)}};
  return doc;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::hash() const {
  json doc = to_json();
  doc.erase("eval");
  doc.erase("output_dir");
  doc["problem"] = problem.to_json();  // content of the distribution, not its path
  doc.erase("task");
  return fnv1a_hex(doc.dump());
}

DistillConfig RunConfig::resolved_distill() const {
  if (!seed) throw ConfigError("a seed is required (config 'seed' or --seed)");
  DistillConfig dc = distill;
  dc.seed = *seed;
  dc.zeta = zeta ? *zeta : default_zeta(problem.distribution.seq_len);
  return dc;
}

SweepSettings RunConfig::sweep_settings(int threads) const {
  if (!seed) throw ConfigError("a seed is required (config 'seed' or --seed)");
  SweepSettings s;
  s.nfe_list = eval.nfe;
  s.n_eval_samples = eval.n_eval_samples;
  s.n_loss_samples = eval.n_loss_samples;
  s.teacher_steps = distill.teacher_steps;
  s.t_max = distill.t_max;
  s.epsilon = distill.epsilon;
  s.sampler = distill.sampler;
  s.include_teacher = eval.include_teacher;
  s.record_timing = eval.record_timing;
  s.countdown = problem.rule();
  s.seed = *seed;
  s.threads = threads;
  return s;
}

std::filesystem::path RunConfig::output_path() const {
  std::filesystem::path p = output_dir;
  return p.is_relative() ? base_dir / p : p;
}

}  // namespace lsd
