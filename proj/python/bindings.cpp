#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "lsd/commands.hpp"
#include "lsd/config.hpp"
#include "lsd/errors.hpp"
#include "lsd/eval.hpp"

namespace py = pybind11;
using namespace lsd;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text; the python side wraps json.dumps/loads.
json parse(const std::string& text) { return json::parse(text); }

RunConfig config_from(const std::string& text, const std::string& base_dir,
                      std::optional<std::uint64_t> seed) {
  auto cfg = RunConfig::from_json(parse(text), base_dir, text);
  if (seed) cfg.seed = seed;
  if (!cfg.seed) throw ConfigError("a seed is required");
  return cfg;
}

py::tuple run_command(const std::function<int(std::ostream&, std::ostream&)>& body) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = body(out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Learnable samplers for discrete diffusion on enumerable toys";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<SchemaError>(m, "SchemaError");
  py::register_exception<DivergenceError>(m, "DivergenceError");
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<SingularStateError>(m, "SingularStateError");
  py::register_exception<DegenerateStepError>(m, "DegenerateStepError");

  m.def("rate_matrix", [](const std::string& kind, int n) {
    return rate_matrix(parse_diffusion_kind(kind), n);
  });
  m.def("kernel_closed_form", [](const std::string& kind, double delta, int n) {
    return kernel_closed_form(parse_diffusion_kind(kind), delta, n).matrix;
  });
  m.def("kernel_generic", [](const Matrix& q, double tau) { return kernel_generic(q, tau).matrix; });

  m.def("gen_kl", [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DomainError("gen_kl needs equal lengths");
    return gen_kl(a, b);
  });
  m.def("gen_kl_scale_gradient",
        [](const std::vector<double>& a, const std::vector<double>& b, double c) {
          if (a.size() != b.size()) throw DomainError("gen_kl needs equal lengths");
          return gen_kl_scale_gradient(a, b, c);
        });

  m.def("countdown_support", [](int seq_len, int vocab, const std::string& zeros) {
    return countdown_distribution({seq_len, vocab, parse_zero_placement(zeros)}).support;
  });
  m.def("check_countdown", [](const Sequence& x, int seq_len, int vocab, const std::string& zeros) {
    return check_countdown(x, {seq_len, vocab, parse_zero_placement(zeros)});
  });

  py::class_<ScoreOracle>(m, "Oracle")
      .def_static("_from_problem",
                  [](const std::string& problem) { return Problem::from_json(parse(problem)).make_oracle(); })
      .def_static("_from_config",
                  [](const std::string& text, const std::string& base_dir) {
                    return RunConfig::from_json(parse(text), base_dir, text).problem.make_oracle();
                  })
      .def("marginal", &ScoreOracle::exact_marginal, py::arg("x"), py::arg("t"))
      .def("concrete_score",
           [](const ScoreOracle& o, const Sequence& x, double t) {
             return Matrix(o.concrete_score(x, t).values);
           },
           py::arg("x"), py::arg("t"))
      .def_property_readonly("kind", [](const ScoreOracle& o) { return std::string(to_string(o.kind())); })
      .def_property_readonly("num_states", [](const ScoreOracle& o) { return o.space().num_states; })
      .def_property_readonly("seq_len", [](const ScoreOracle& o) { return o.space().seq_len; })
      .def_property_readonly("support", [](const ScoreOracle& o) { return o.distribution().support; })
      .def_property_readonly("probs", [](const ScoreOracle& o) { return o.distribution().probs; });

  m.def("_train",
        [](const std::string& text, const std::string& base_dir, std::optional<std::uint64_t> seed,
           int threads) {
          const auto cfg = config_from(text, base_dir, seed);
          auto dc = cfg.resolved_distill();
          dc.threads = threads;
          const auto oracle = cfg.problem.make_oracle();
          TrainedRun t;
          {
            py::gil_scoped_release release;
            t = train_run(cfg, dc, oracle);
          }
          py::dict out;
          out["lsd"] = t.lsd.to_json().dump();
          if (t.lsd_plus) out["lsd+"] = t.lsd_plus->to_json().dump();
          out["trace"] = t.trace.to_csv();
          return out;
        });

  m.def("_sample",
        [](const std::string& artifact, int n, std::optional<std::uint64_t> seed, int threads) {
          const auto s = LearnedSampler::from_json(parse(artifact));
          const auto oracle = Problem::from_json(s.problem).make_oracle();
          py::gil_scoped_release release;
          return generate_samples(s, oracle, n, seed.value_or(s.seed), threads);
        });

  m.def("_alignment_loss", [](const std::string& artifact, int teacher_steps, int n,
                              std::uint64_t seed, int threads) {
    const auto s = LearnedSampler::from_json(parse(artifact));
    const auto oracle = Problem::from_json(s.problem).make_oracle();
    py::gil_scoped_release release;
    return trajectory_alignment_loss(s, teacher_steps, oracle, n, seed, threads);
  });

  m.def("tv_distance", [](const ScoreOracle& o, const std::vector<Sequence>& samples) {
    return tv_distance(samples, o.distribution());
  });

  m.def("cmd_train", [](const std::string& config, std::optional<std::uint64_t> seed, int threads) {
    return run_command([&](std::ostream& out, std::ostream& err) {
      return cmd_train(config, {seed, threads}, out, err);
    });
  });
  m.def("cmd_sample", [](const std::string& artifact, long long n, const std::string& path,
                         std::optional<std::uint64_t> seed, int threads) {
    return run_command([&](std::ostream& out, std::ostream& err) {
      return cmd_sample(artifact, n, path, {seed, threads}, out, err);
    });
  });
  m.def("cmd_sweep", [](const std::string& config, std::optional<std::uint64_t> seed, int threads) {
    return run_command([&](std::ostream& out, std::ostream& err) {
      return cmd_sweep(config, {seed, threads}, out, err);
    });
  });
  m.def("cmd_verify", [](const std::string& artifact) {
    return run_command([&](std::ostream& out, std::ostream& err) { return cmd_verify(artifact, out, err); });
  });
}
