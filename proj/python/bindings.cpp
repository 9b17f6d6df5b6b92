#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bandalloc/allocation.hpp"
#include "bandalloc/config.hpp"
#include "bandalloc/errors.hpp"
#include "bandalloc/gnn.hpp"
#include "bandalloc/harness.hpp"
#include "bandalloc/learning.hpp"
#include "bandalloc/numerics.hpp"
#include "bandalloc/qos.hpp"

namespace py = pybind11;
using namespace bandalloc;

namespace {

std::uint64_t stream_id(const std::string& name) {
    if (name == "channels") return streams::kChannels;
    if (name == "eval") return streams::kEval;
    if (name == "params") return streams::kParams;
    throw ConfigError("unknown stream: " + name);
}

py::dict command_output(const CommandOutput& out) {
    py::dict d;
    d["results_csv"] = results_csv(out.results);
    d["log_csv"] = out.log ? py::cast(out.log->to_csv()) : py::none();
    d["params_json"] = out.params ? py::cast(save_params(*out.params)) : py::none();
    d["files"] = out.files;
    d["warnings"] = out.warnings;
    return d;
}

}  // namespace

PYBIND11_MODULE(_bandalloc, m) {
    m.doc() = "Bandwidth allocation with an iterative oracle and a meta-learned GNN";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<SizeError>(m, "SizeError", PyExc_ValueError);
    py::register_exception<FileError>(m, "FileError", PyExc_OSError);
    py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
    py::register_exception<BracketError>(m, "BracketError", PyExc_RuntimeError);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

    m.def("q_function", &q_function, py::arg("x"));
    m.def("inverse_q", [](double p) { return inverse_q(p); }, py::arg("p"));

    py::class_<TaskSpec>(m, "TaskSpec")
        .def(py::init<>())
        .def_static("fine_tune_eval", &fine_tune_eval_task)
        .def_static("from_json", &task_from_json_text, py::arg("text"))
        .def("to_json", &task_to_json_text)
        .def_readwrite("num_users", &TaskSpec::num_users)
        .def_readwrite("pathloss_exponent", &TaskSpec::pathloss_exponent)
        .def_readwrite("shadowing_sigma_db", &TaskSpec::shadowing_sigma_db)
        .def_readwrite("rate_threshold_bps", &TaskSpec::rate_threshold_bps)
        .def_readwrite("reserved_bandwidth_hz", &TaskSpec::reserved_bandwidth_hz)
        .def_readwrite("area_half_width", &TaskSpec::area_half_width)
        .def_readwrite("seed", &TaskSpec::seed)
        .def_property(
            "qos", [](const TaskSpec& t) { return to_string(t.qos); },
            [](TaskSpec& t, const std::string& s) { t.qos = parse_qos(s); })
        .def("validate", &TaskSpec::validate)
        .def("__eq__", [](const TaskSpec& a, const TaskSpec& b) { return a == b; });

    m.def("qos_kinds", [] {
        std::vector<std::string> out;
        for (const auto& q : all_qos_kinds()) out.push_back(to_string(q));
        return out;
    });

    py::class_<ChannelSample>(m, "ChannelSample")
        .def_readonly("gain", &ChannelSample::gain)
        .def_readonly("eve_gain", &ChannelSample::eve_gain)
        .def_readonly("tx_power_w", &ChannelSample::tx_power_w)
        .def_readonly("noise_w_per_hz", &ChannelSample::noise_w_per_hz)
        .def_property_readonly("num_users", &ChannelSample::num_users);

    m.def(
        "sample_channel",
        [](const TaskSpec& t, std::uint64_t index, const std::string& stream) {
            return sample_channel(t, RngStream{t.seed, stream_id(stream)}, index);
        },
        py::arg("task"), py::arg("index"), py::arg("stream") = "channels");

    py::class_<RewardModel>(m, "RewardModel")
        .def(py::init([](const TaskSpec& t, std::size_t n_mc) {
                 RewardModel::Options o;
                 o.n_mc = n_mc;
                 return RewardModel::build(t, o);
             }),
             py::arg("task"), py::arg("n_mc") = 1000)
        .def_property_readonly("budget", &RewardModel::budget)
        .def_property_readonly("threshold", &RewardModel::threshold)
        .def("reward", &RewardModel::reward, py::arg("sample"), py::arg("user"), py::arg("w"))
        .def("derivative", &RewardModel::derivative, py::arg("sample"), py::arg("user"),
             py::arg("w"));

    py::class_<ScheduleResult>(m, "Schedule")
        .def_readonly("scheduled", &ScheduleResult::scheduled)
        .def_readonly("w_min", &ScheduleResult::w_min)
        .def_readonly("budget_hz", &ScheduleResult::budget_hz)
        .def_property_readonly("surplus_hz", &ScheduleResult::surplus_hz)
        .def("__len__", &ScheduleResult::size);

    py::class_<Allocation>(m, "Allocation")
        .def_readonly("w", &Allocation::w)
        .def_readonly("rewards", &Allocation::rewards)
        .def_readonly("sum_reward", &Allocation::sum_reward)
        .def_readonly("halted_early", &Allocation::halted_early);

    m.def(
        "schedule_users",
        [](const RewardModel& model, const ChannelSample& s) { return schedule_users(model, s); },
        py::arg("model"), py::arg("sample"));
    m.def("make_schedule", &make_schedule, py::arg("users"), py::arg("w_min"),
          py::arg("budget_hz"));
    m.def(
        "allocate_iterative",
        [](const ScheduleResult& sched, const RewardModel& model, const ChannelSample& s,
           double block_hz, bool reuse_marginals) {
            return allocate_iterative(sched, model, s, IterativeOptions{block_hz, reuse_marginals});
        },
        py::arg("schedule"), py::arg("model"), py::arg("sample"),
        py::arg("block_hz") = kDefaultBlockHz, py::arg("reuse_marginals") = false);
    m.def("allocate_bruteforce", &allocate_bruteforce, py::arg("schedule"), py::arg("model"),
          py::arg("sample"), py::arg("block_hz") = kDefaultBlockHz);

    py::class_<GnnParams>(m, "GnnParams")
        .def_static("from_json", &load_params, py::arg("text"))
        .def("to_json", &save_params)
        .def("__len__", &GnnParams::size)
        .def("values", [](const GnnParams& p) {
            return std::vector<double>(p.flat().begin(), p.flat().end());
        });

    m.def(
        "init_params",
        [](std::vector<int> layer_sizes, const std::string& activation, std::uint64_t seed) {
            FnnArchitecture arch;
            arch.layer_sizes = std::move(layer_sizes);
            arch.hidden = parse_activation(activation);
            return init_params(arch, RngStream{seed, streams::kParams});
        },
        py::arg("layer_sizes") = std::vector<int>{2, 32, 64, 32, 1},
        py::arg("activation") = "relu", py::arg("seed") = 0);
    m.def(
        "gnn_allocate",
        [](const GnnParams& p, const ScheduleResult& sched, const RewardModel& model,
           const ChannelSample& s) { return gnn_allocate(p, sched, model, s); },
        py::arg("params"), py::arg("schedule"), py::arg("model"), py::arg("sample"));

    m.def("fnn_multiplies", &fnn_multiplies, py::arg("layer_sizes"));
    m.def(
        "estimate_complexity",
        [](const std::string& kind, std::size_t k, double surplus_hz, double block_hz,
           const std::vector<int>& layers, double omega) {
            if (kind != "gnn" && kind != "iterative") throw ConfigError("unknown kind: " + kind);
            return estimate_complexity(kind == "gnn" ? ComplexityKind::Gnn : ComplexityKind::Iterative,
                                       k, surplus_hz, block_hz, layers, omega);
        },
        py::arg("kind"), py::arg("num_scheduled"), py::arg("surplus_hz") = 0.0,
        py::arg("block_hz") = kDefaultBlockHz,
        py::arg("layer_sizes") = std::vector<int>{2, 32, 64, 32, 1}, py::arg("omega") = 1.0);

    m.def("default_config", [] { return config_to_json_text(ExperimentConfig{}); });
    m.def("command_names", &command_names);
    m.def(
        "run_command",
        [](const std::string& name, const std::string& config_json) {
            const ExperimentConfig cfg = config_from_json_text(config_json);
            CommandOutput out;
            {
                py::gil_scoped_release release;
                out = run_command(name, cfg);
            }
            return command_output(out);
        },
        py::arg("name"), py::arg("config_json") = "{}");
    m.def("strip_wall_time", &strip_wall_time, py::arg("csv_text"));
}
