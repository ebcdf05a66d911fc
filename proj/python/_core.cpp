#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rtslab/agent/ddpg.hpp"
#include "rtslab/backdoor/backdoor.hpp"
#include "rtslab/cli/config.hpp"
#include "rtslab/cli/pipeline.hpp"
#include "rtslab/defender/defender.hpp"
#include "rtslab/envs/env.hpp"
#include "rtslab/errors.hpp"
#include "rtslab/harness/harness.hpp"

namespace py = pybind11;
using namespace rtslab;

namespace {

std::string run_stage(const std::string& config_path, const std::string& stage, const std::string& output_dir,
                      bool force) {
  auto config = cli::load_config(config_path);
  if (!output_dir.empty()) config.output_dir = output_dir;
  std::ostringstream log;
  const cli::RunOptions opt{force};
  if (stage == "train") cli::cmd_train(config, opt, log);
  else if (stage == "defend") cli::cmd_defend(config, opt, log);
  else if (stage == "eval") cli::cmd_eval(config, opt, log);
  else if (stage == "report") cli::cmd_report(config, log);
  else throw ContractError("unknown stage: " + stage);
  return log.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Backdoored-policy attack and dynamics-model defense toolkit";
  m.attr("__version__") = cli::tool_version();

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", PyExc_FileNotFoundError);
  py::register_exception<cli::OutputExistsError>(m, "OutputExistsError", PyExc_FileExistsError);

  py::class_<envs::EnvSpec>(m, "EnvSpec")
      .def_readonly("name", &envs::EnvSpec::name)
      .def_readonly("state_dim", &envs::EnvSpec::state_dim)
      .def_readonly("action_dim", &envs::EnvSpec::action_dim)
      .def_readonly("action_low", &envs::EnvSpec::action_low)
      .def_readonly("action_high", &envs::EnvSpec::action_high)
      .def_readonly("max_episode_steps", &envs::EnvSpec::max_episode_steps);

  py::class_<envs::Env>(m, "Env")
      .def_property_readonly("spec", &envs::Env::spec, py::return_value_policy::reference_internal)
      .def("reset", &envs::Env::reset, py::arg("seed"))
      .def(
          "step",
          [](envs::Env& e, const envs::Action& a) {
            auto r = e.step(a);
            return py::make_tuple(r.next_state, r.reward, r.done, std::string(envs::done_reason_name(r.reason)));
          },
          py::arg("action"))
      .def("true_transition",
           [](const envs::Env& e, const envs::State& s, const envs::Action& a) { return e.true_transition(s, a); })
      .def_property_readonly("state", &envs::Env::state)
      .def_property_readonly("done", &envs::Env::done);
  m.def("make_env", &envs::make_env, py::arg("name"), py::arg("physics") = envs::PhysicsOverrides{});
  m.def("env_names", &envs::env_names);

  py::class_<agent::Policy>(m, "Policy")
      .def("act", [](const agent::Policy& p, const envs::State& s) { return p.act(s); }, py::arg("state"))
      .def_property_readonly("state_dim", &agent::Policy::state_dim)
      .def_property_readonly("action_dim", &agent::Policy::action_dim);
  m.def("load_policy", [](const std::filesystem::path& p) { return agent::load_policy(p); }, py::arg("path"));
  m.def(
      "evaluate_policy",
      [](const agent::Policy& p, const envs::Env& env, const std::vector<std::uint64_t>& seeds) {
        std::vector<double> returns;
        for (const auto& s : agent::evaluate_policy(p, env, seeds)) returns.push_back(s.episode_return);
        return returns;
      },
      py::arg("policy"), py::arg("env"), py::arg("seeds"));

  py::enum_<backdoor::TriggerMode>(m, "TriggerMode")
      .value("additive", backdoor::TriggerMode::additive)
      .value("overwrite", backdoor::TriggerMode::overwrite);
  py::class_<backdoor::Trigger>(m, "Trigger")
      .def_readonly("mask", &backdoor::Trigger::mask)
      .def_readonly("delta", &backdoor::Trigger::delta)
      .def_readonly("mode", &backdoor::Trigger::mode);
  m.def("single_dim_trigger", &backdoor::single_dim_trigger, py::arg("state_dim"), py::arg("dim"), py::arg("value"),
        py::arg("mode") = backdoor::TriggerMode::overwrite);
  m.def(
      "apply_trigger",
      [](const backdoor::Trigger& t, const envs::State& s) { return backdoor::apply_trigger(t, s); },
      py::arg("trigger"), py::arg("state"));
  m.def("load_trigger", &cli::load_trigger, py::arg("path"));

  py::class_<defender::DynamicsModel>(m, "DynamicsModel")
      .def("predict", [](const defender::DynamicsModel& d, const envs::State& s,
                         const envs::Action& a) { return d.predict(s, a); })
      .def_property("threshold", &defender::DynamicsModel::threshold, &defender::DynamicsModel::set_threshold);
  m.def("load_model", [](const std::filesystem::path& p) { return defender::load_model(p); }, py::arg("path"));
  m.def(
      "guard_step",
      [](const defender::DynamicsModel& d, double h, const envs::State& prev, const envs::Action& a,
         const envs::State& incoming) {
        auto r = defender::guard_step(d, h, prev, a, incoming);
        return py::make_tuple(r.chosen, r.flagged, r.residual);
      },
      py::arg("model"), py::arg("threshold"), py::arg("s_prev_chosen"), py::arg("a_prev"), py::arg("s_incoming"));

  m.def(
      "run_episode",
      [](const agent::Policy& p, const envs::Env& env, int period, int burst, const backdoor::Trigger* trigger,
         const defender::DynamicsModel* model, std::uint64_t seed) {
        harness::AttackSchedule sch{period, burst, 20, trigger != nullptr};
        std::optional<harness::Guard> guard;
        if (model) guard = harness::Guard{model, model->threshold(), defender::Detector::state};
        const auto r = harness::run_episode(p, env, sch, trigger, guard, seed);
        py::dict d;
        d["return"] = r.episode_return;
        d["length"] = r.length;
        d["failed"] = r.failed;
        d["attacked"] = r.attacked;
        d["flagged"] = r.flagged;
        d["residuals"] = r.residuals;
        return d;
      },
      py::arg("policy"), py::arg("env"), py::arg("period") = 20, py::arg("burst_length") = 1,
      py::arg("trigger") = nullptr, py::arg("model") = nullptr, py::arg("seed") = 0);

  m.def(
      "config_hash", [](const std::string& path) { return cli::config_hash(cli::load_config(path)); },
      py::arg("config_path"));
  m.def("run_stage", &run_stage, py::arg("config_path"), py::arg("stage"), py::arg("output_dir") = "",
        py::arg("force") = false, py::call_guard<py::gil_scoped_release>(),
        "Run one pipeline stage (train, defend, eval, report) and return its log.");
}
