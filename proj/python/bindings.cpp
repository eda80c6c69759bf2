#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bioptx/bridge.hpp"
#include "bioptx/cohort.hpp"
#include "bioptx/compare.hpp"
#include "bioptx/policy.hpp"
#include "bioptx/strategies.hpp"

namespace py = pybind11;
using namespace bioptx;

namespace {

// JSON crosses the boundary as text; Python's json module turns it into
// plain dicts and lists.
py::object to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Json from_py(const py::handle& obj) {
  return Json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::array_t<std::uint8_t> plane_array(const PlaneImage& p) {
  py::array_t<std::uint8_t> a({2, p.res_v, p.res_u});
  std::copy(p.pixels.begin(), p.pixels.end(), a.mutable_data());
  return a;
}

std::shared_ptr<const LabelVolume> share(const LabelVolume& v) {
  return std::make_shared<const LabelVolume>(v);
}

EnvConfig env_config(double noise_sd, double depth_noise_sd) {
  EnvConfig c;
  c.noise_sd_mm = noise_sd;
  c.depth_noise_sd_mm = depth_noise_sd;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Biopsy targeting environment, baselines, metrics and PPO policy";

  py::register_exception<EnvError>(m, "EnvError", PyExc_RuntimeError);
  py::register_exception<AnatomyError>(m, "AnatomyError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<LabelVolume, std::shared_ptr<LabelVolume>>(m, "LabelVolume")
      .def_property_readonly("dims",
                             [](const LabelVolume& v) {
                               const Index3 d = v.dims();
                               return py::make_tuple(d.x, d.y, d.z);
                             })
      .def("lesion_cc", [](const LabelVolume& v) { return lesion_volume_cc(v); })
      .def("lesion_centroid",
           [](const LabelVolume& v) {
             const Vec3 c = lesion_centroid(v);
             return py::make_tuple(c.x, c.y, c.z);
           })
      .def("save", [](const LabelVolume& v, const std::filesystem::path& p) { save_volume(v, p); })
      .def("labels", [](const LabelVolume& v) {
        const Index3 d = v.dims();
        // x is fastest in memory, so the array is indexed [z][y][x].
        py::array_t<std::uint8_t> a({d.z, d.y, d.x});
        std::copy(v.voxels().begin(), v.voxels().end(), a.mutable_data());
        return a;
      });

  m.def(
      "synthetic_case",
      [](double lesion_cc, std::tuple<double, double, double> center, std::uint64_t seed) {
        AnatomySpec s;
        s.lesion_volume_cc = lesion_cc;
        s.lesion_center = {std::get<0>(center), std::get<1>(center), std::get<2>(center)};
        s.seed = seed;
        return std::make_shared<LabelVolume>(generate_synthetic(s));
      },
      py::arg("lesion_cc") = 0.4, py::arg("center") = std::make_tuple(0.0, 30.0, 45.0),
      py::arg("seed") = 0);
  m.def(
      "load_volume",
      [](const std::filesystem::path& p) { return std::make_shared<LabelVolume>(load_volume(p)); },
      py::arg("path"));
  m.def(
      "load_cases",
      [](const std::filesystem::path& p) {
        py::list out;
        for (const auto& c : load_cases(p)) {
          out.append(py::make_tuple(c.id, std::make_shared<LabelVolume>(*c.volume)));
        }
        return out;
      },
      py::arg("path"));

  py::class_<BiopsyEnv>(m, "Env")
      .def(py::init([](const LabelVolume& vol, double noise_sd, double depth_noise_sd,
                       const std::string& case_id) {
             return BiopsyEnv(share(vol), env_config(noise_sd, depth_noise_sd), case_id);
           }),
           py::arg("volume"), py::arg("noise_sd") = EnvConfig{}.noise_sd_mm,
           py::arg("depth_noise_sd") = EnvConfig{}.depth_noise_sd_mm, py::arg("case_id") = "")
      .def(
          "reset",
          [](BiopsyEnv& env, std::uint64_t seed, std::optional<std::pair<int, int>> start) {
            std::optional<Hole> h;
            if (start) h = Hole{start->first, start->second};
            return to_py(to_json(env.reset(seed, h)));
          },
          py::arg("seed"), py::arg("start") = py::none())
      .def(
          "step",
          [](BiopsyEnv& env, double di, double dj) { return to_py(to_json(env.step({di, dj}))); },
          py::arg("di"), py::arg("dj"))
      .def("plane", [](const BiopsyEnv& env, int i, int j) {
        return plane_array(env.observe(Hole{i, j}).plane);
      })
      .def("log", [](const BiopsyEnv& env) { return to_py(to_json(env.log())); })
      .def("canonical_log", [](const BiopsyEnv& env) { return canonical(env.log()); })
      .def_property_readonly("done", &BiopsyEnv::done)
      .def_property_readonly("hits", &BiopsyEnv::hits)
      .def_property_readonly("steps", &BiopsyEnv::steps)
      .def_property_readonly("hole", [](const BiopsyEnv& env) {
        return py::make_tuple(env.current_hole().i, env.current_hole().j);
      });

  m.def(
      "run_baseline",
      [](BiopsyEnv& env, const std::string& strategy, std::uint64_t seed, double bias_mm,
         double sd_mm) {
        env.reset(seed);
        std::mt19937_64 rng(seed);
        const Perturbation pert{bias_mm, sd_mm};
        if (strategy == "sweep") return to_py(to_json(sweep_episode(env, pert, rng)));
        if (strategy == "scout") return to_py(to_json(scout_episode(env, pert, rng)));
        throw std::invalid_argument("unknown strategy '" + strategy + "'");
      },
      py::arg("env"), py::arg("strategy"), py::arg("seed"), py::arg("bias_mm") = 0.0,
      py::arg("sd_mm") = 0.0);

  m.def(
      "episode_metrics",
      [](const py::object& log, double lesion_cc, int last_n) {
        const EpisodeMetrics em =
            evaluate_episode(episode_from_json(from_py(log)), lesion_cc, MetricsOptions{last_n});
        py::dict d;
        d["hr_pct"] = em.hr_pct;
        d["ccl_mm"] = em.ccl.episode_mm;
        d["ccl_max_mm"] = em.ccl.max_mm;
        d["significant"] = em.ccl.significant;
        d["na_mm2"] = em.na_mm2;
        d["needles"] = em.needles_fired;
        return d;
      },
      py::arg("log"), py::arg("lesion_cc") = 0.0, py::arg("last_n") = 0);
  m.def(
      "needle_area",
      [](const std::vector<std::pair<double, double>>& pts) {
        std::vector<WorldXY> xy;
        for (const auto& [x, y] : pts) xy.push_back({x, y});
        return needle_area(xy);
      },
      py::arg("points"));
  m.def(
      "ttest",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const TTestResult r = two_sample_ttest(a, b);
        return py::make_tuple(r.t, r.df, r.p);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "compare",
      [](const std::map<std::string, std::vector<double>>& a,
         const std::map<std::string, std::vector<double>>& b, double alpha) {
        return to_py(compare_json(compare_samples(a, b, alpha), alpha));
      },
      py::arg("a"), py::arg("b"), py::arg("alpha") = 0.05);

  py::class_<PolicyNet>(m, "Policy")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); })
      .def(
          "evaluate",
          [](const PolicyNet& net, BiopsyEnv& env, int episodes, std::uint64_t seed) {
            py::list out;
            for (const auto& l : evaluate_policy(net, env, episodes, seed)) {
              out.append(to_py(to_json(l)));
            }
            return out;
          },
          py::arg("env"), py::arg("episodes"), py::arg("seed") = 1)
      .def("act", [](const PolicyNet& net, const py::object& obs) {
        const PolicyOutput o = net.forward(encode_observation(observation_from_json(from_py(obs))));
        const double r = 15.0;
        return py::make_tuple(std::clamp(o.mean[0], -r, r), std::clamp(o.mean[1], -r, r));
      });

  py::class_<Bridge>(m, "Bridge")
      .def(py::init([](const LabelVolume& vol, double noise_sd, double depth_noise_sd,
                       const std::string& case_id) {
             return std::make_unique<Bridge>(share(vol), env_config(noise_sd, depth_noise_sd),
                                             case_id);
           }),
           py::arg("volume"), py::arg("noise_sd") = EnvConfig{}.noise_sd_mm,
           py::arg("depth_noise_sd") = EnvConfig{}.depth_noise_sd_mm, py::arg("case_id") = "")
      .def("handle_line", [](Bridge& b, const std::string& line) { return b.handle_line(line); });

  m.attr("PROTOCOL") = kBridgeProtocol;
}
