#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "otfs_radar/channel.hpp"
#include "otfs_radar/config_file.hpp"
#include "otfs_radar/core_model.hpp"
#include "otfs_radar/crlb.hpp"
#include "otfs_radar/errors.hpp"
#include "otfs_radar/estimator.hpp"
#include "otfs_radar/harness.hpp"
#include "otfs_radar/otfs_modem.hpp"

namespace py = pybind11;
using namespace otfs_radar;

namespace {

using CArray = py::array_t<cd, py::array::c_style | py::array::forcecast>;

template <class F>
F frame_from(const CArray& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D complex array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return F(rows, cols, std::vector<cd>(a.data(), a.data() + rows * cols));
}

template <class F>
CArray to_array(const F& f) {
    CArray out({f.rows(), f.cols()});
    std::memcpy(out.mutable_data(), f.vector().data(), f.size() * sizeof(cd));
    return out;
}

CArray vec_to_array(std::span<const cd> v) {
    CArray out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
    std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(cd));
    return out;
}

// Received signals cross the boundary as (N_a, N, M) arrays.
CArray signal_to_array(const ReceivedSignal& y, const SystemConfig& cfg) {
    CArray out({y.antennas(), cfg.N, cfg.M});
    std::memcpy(out.mutable_data(), y.samples().data(), y.size() * sizeof(cd));
    return out;
}

ReceivedSignal signal_from(const CArray& a, const SystemConfig& cfg) {
    if (a.ndim() != 3 || static_cast<std::size_t>(a.shape(1)) != cfg.N ||
        static_cast<std::size_t>(a.shape(2)) != cfg.M)
        throw py::value_error("expected a complex array of shape (N_a, N, M)");
    ReceivedSignal y(static_cast<std::size_t>(a.shape(0)), cfg.grid_size());
    std::memcpy(y.samples().data(), a.data(), y.size() * sizeof(cd));
    return y;
}

BeamVector beam_from(const CArray& a) {
    if (a.ndim() != 1) throw py::value_error("beam weights must be 1-D");
    return BeamVector{std::vector<cd>(a.data(), a.data() + a.shape(0))};
}

std::string repr_fields(const char* name, std::initializer_list<std::pair<const char*, double>> fields) {
    std::string s = std::string(name) + "(";
    bool first = true;
    for (const auto& [k, v] : fields) {
        if (!first) s += ", ";
        s += std::string(k) + "=" + py::repr(py::float_(v)).cast<std::string>();
        first = false;
    }
    return s + ")";
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "OTFS MIMO radar simulator core";
    m.attr("__version__") = kVersion;
    m.attr("SPEED_OF_LIGHT") = kSpeedOfLight;

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ResourceError>(m, "ResourceError", PyExc_MemoryError);
    py::register_exception<IllConditionedError>(m, "IllConditionedError", PyExc_ArithmeticError);
    py::register_exception<SingularFisherError>(m, "SingularFisherError", PyExc_ArithmeticError);

    py::class_<AngleSector>(m, "AngleSector")
        .def(py::init<>())
        .def(py::init([](double lo, double hi) { return AngleSector{lo, hi}; }), py::arg("min"),
             py::arg("max"))
        .def_readwrite("min", &AngleSector::min)
        .def_readwrite("max", &AngleSector::max)
        .def("__repr__", [](const AngleSector& s) {
            return repr_fields("AngleSector", {{"min", s.min}, {"max", s.max}});
        });

    py::class_<SystemConfig>(m, "SystemConfig")
        .def(py::init<>())
        .def_readwrite("N", &SystemConfig::N)
        .def_readwrite("M", &SystemConfig::M)
        .def_readwrite("delta_f", &SystemConfig::delta_f)
        .def_readwrite("T", &SystemConfig::T)
        .def_readwrite("f_c", &SystemConfig::f_c)
        .def_readwrite("B", &SystemConfig::B)
        .def_readwrite("N_a", &SystemConfig::N_a)
        .def_readwrite("N_rf", &SystemConfig::N_rf)
        .def_readwrite("P_avg", &SystemConfig::P_avg)
        .def_readwrite("sigma_w2", &SystemConfig::sigma_w2)
        .def_readwrite("omega", &SystemConfig::omega)
        .def_readwrite("sector", &SystemConfig::sector)
        .def_readwrite("rng_seed", &SystemConfig::rng_seed)
        .def_property_readonly("wavelength", &SystemConfig::wavelength)
        .def_property_readonly("delay_cell", &SystemConfig::delay_cell)
        .def_property_readonly("doppler_cell", &SystemConfig::doppler_cell)
        .def_property_readonly("angle_cell", &SystemConfig::angle_cell);

    m.def("make_system_config", &make_system_config, py::arg("N"), py::arg("M"), py::arg("B"),
          py::arg("f_c"), py::arg("N_a"), py::arg("N_rf") = 1, py::arg("sector") = AngleSector{},
          py::arg("omega") = std::vector<double>{});
    m.def("auto_omega", &auto_omega, py::arg("sector"), py::arg("n_antennas"));
    m.def("validate", &validate, py::arg("cfg"));

    py::class_<Target>(m, "Target")
        .def(py::init<>())
        .def(py::init([](double range, double velocity, double angle, double rcs, cd gain) {
                 return Target{range, velocity, angle, rcs, gain};
             }),
             py::arg("range"), py::arg("velocity") = 0.0, py::arg("angle") = 0.0,
             py::arg("rcs") = 1.0, py::arg("gain") = cd{0.0, 0.0})
        .def_readwrite("range", &Target::range)
        .def_readwrite("velocity", &Target::velocity)
        .def_readwrite("angle", &Target::angle)
        .def_readwrite("rcs", &Target::rcs)
        .def_readwrite("gain", &Target::gain);

    py::class_<GridPoint>(m, "GridPoint")
        .def_readonly("k", &GridPoint::k)
        .def_readonly("l", &GridPoint::l)
        .def_readonly("angle_index", &GridPoint::angle_index);

    py::class_<Resolutions>(m, "Resolutions")
        .def_readonly("v_res", &Resolutions::v_res)
        .def_readonly("r_res", &Resolutions::r_res)
        .def_readonly("v_max", &Resolutions::v_max)
        .def_readonly("r_max", &Resolutions::r_max);

    m.def("resolutions", &resolutions, py::arg("cfg"));
    m.def(
        "derive_physical",
        [](const Target& t, const SystemConfig& cfg) {
            const auto d = derive_physical(t, cfg);
            return py::make_tuple(d.tau, d.nu);
        },
        py::arg("target"), py::arg("cfg"), "Returns (tau, nu).");
    m.def("range_from_delay", &range_from_delay, py::arg("tau"));
    m.def("velocity_from_doppler", &velocity_from_doppler, py::arg("nu"), py::arg("f_c"));
    m.def("radar_snr", &radar_snr, py::arg("target"), py::arg("cfg"), py::arg("antenna_gain") = 1.0);
    m.def("noise_for_snr", &noise_for_snr, py::arg("snr_linear"), py::arg("range"), py::arg("rcs"),
          py::arg("cfg"), py::arg("antenna_gain") = 1.0);

    m.def(
        "isfft", [](const CArray& x) { return to_array(isfft(frame_from<DelayDopplerFrame>(x))); },
        py::arg("x"));
    m.def(
        "sfft", [](const CArray& y) { return to_array(sfft(frame_from<TimeFrequencyFrame>(y))); },
        py::arg("y"));
    m.def(
        "generate_symbols",
        [](const SystemConfig& cfg, std::uint64_t seed) { return to_array(generate_symbols(cfg, seed)); },
        py::arg("cfg"), py::arg("seed"));

    m.def(
        "steering", [](double phi, std::size_t n_a) { return vec_to_array(steering(phi, n_a).entries); },
        py::arg("phi"), py::arg("n_a"));
    m.def(
        "sector_beam",
        [](const SystemConfig& cfg) { return vec_to_array(sector_beam(cfg).weights); }, py::arg("cfg"));
    m.def(
        "beam_gain", [](const CArray& f, double phi) { return beam_gain(beam_from(f), phi); },
        py::arg("f"), py::arg("phi"));
    m.def("cross_ambiguity", &cross_ambiguity, py::arg("tau"), py::arg("nu"), py::arg("cfg"));
    m.def(
        "psi_apply",
        [](double tau, double nu, const CArray& x, const SystemConfig& cfg) {
            return to_array(psi_apply(tau, nu, frame_from<DelayDopplerFrame>(x), cfg));
        },
        py::arg("tau"), py::arg("nu"), py::arg("x"), py::arg("cfg"));
    m.def(
        "synthesize",
        [](const std::vector<Target>& targets, const CArray& x, const CArray& f,
           const SystemConfig& cfg, std::uint64_t seed) {
            const auto y = synthesize(Scene{targets}, frame_from<DelayDopplerFrame>(x), beam_from(f),
                                      cfg, seed);
            return signal_to_array(y, cfg);
        },
        py::arg("targets"), py::arg("x"), py::arg("f"), py::arg("cfg"), py::arg("seed"),
        "Received signal of shape (N_a, N, M).");

    py::class_<EstimatorOptions>(m, "EstimatorOptions")
        .def(py::init<>())
        .def_readwrite("p_fa_design", &EstimatorOptions::p_fa_design)
        .def_readwrite("residual_passes", &EstimatorOptions::residual_passes)
        .def_readwrite("max_candidates", &EstimatorOptions::max_candidates)
        .def_readwrite("max_outer_iterations", &EstimatorOptions::max_outer_iterations)
        .def_readwrite("initial_step_cells", &EstimatorOptions::initial_step_cells)
        .def_readwrite("min_step_cells", &EstimatorOptions::min_step_cells)
        .def_readwrite("stencil_radius", &EstimatorOptions::stencil_radius)
        .def_readwrite("move_tolerance_cells", &EstimatorOptions::move_tolerance_cells)
        .def_readwrite("angle_tolerance", &EstimatorOptions::angle_tolerance)
        .def_readwrite("condition_limit", &EstimatorOptions::condition_limit)
        .def_readwrite("joint_updates", &EstimatorOptions::joint_updates)
        .def_readwrite("resolution_cells", &EstimatorOptions::resolution_cells);

    py::class_<TargetEstimate>(m, "TargetEstimate")
        .def(py::init<>())
        .def(py::init([](double tau, double nu, double phi, cd gain) {
                 return TargetEstimate{tau, nu, phi, gain};
             }),
             py::arg("tau"), py::arg("nu"), py::arg("phi"), py::arg("gain") = cd{0.0, 0.0})
        .def_readwrite("tau", &TargetEstimate::tau)
        .def_readwrite("nu", &TargetEstimate::nu)
        .def_readwrite("phi", &TargetEstimate::phi)
        .def_readwrite("gain", &TargetEstimate::gain);

    py::class_<CandidateTarget>(m, "CandidateTarget")
        .def_readonly("grid", &CandidateTarget::grid)
        .def_readonly("statistic", &CandidateTarget::statistic)
        .def_readonly("refined", &CandidateTarget::refined)
        .def_readonly("iterations_used", &CandidateTarget::iterations_used)
        .def_readonly("flags", &CandidateTarget::flags);

    py::class_<DetectionOutput>(m, "DetectionOutput")
        .def_readonly("candidates", &DetectionOutput::candidates)
        .def_readonly("threshold_used", &DetectionOutput::threshold_used)
        .def_readonly("relative_threshold", &DetectionOutput::relative_threshold)
        .def_readonly("noise_floor", &DetectionOutput::noise_floor)
        .def_readonly("fallback", &DetectionOutput::fallback);

    m.def(
        "statistic",
        [](const CArray& y, double tau, double nu, double phi, const CArray& f, const CArray& x,
           const SystemConfig& cfg) {
            return statistic_S(signal_from(y, cfg), tau, nu, phi, beam_from(f),
                               frame_from<DelayDopplerFrame>(x), cfg);
        },
        py::arg("y"), py::arg("tau"), py::arg("nu"), py::arg("phi"), py::arg("f"), py::arg("x"),
        py::arg("cfg"));
    m.def(
        "estimate",
        [](const CArray& y, const CArray& x, const CArray& f, const SystemConfig& cfg,
           const EstimatorOptions& options) {
            const auto ys = signal_from(y, cfg);
            const auto xs = frame_from<DelayDopplerFrame>(x);
            const auto fs = beam_from(f);
            py::gil_scoped_release release;
            const auto cache = build_cache(xs, cfg);
            return estimate(ys, xs, fs, cache, cfg, options);
        },
        py::arg("y"), py::arg("x"), py::arg("f"), py::arg("cfg"),
        py::arg("options") = EstimatorOptions{});

    py::class_<TargetParams>(m, "TargetParams")
        .def(py::init<>())
        .def(py::init([](double A, double psi, double tau, double nu, double phi) {
                 return TargetParams{A, psi, tau, nu, phi};
             }),
             py::arg("A"), py::arg("psi"), py::arg("tau"), py::arg("nu"), py::arg("phi"))
        .def_readwrite("A", &TargetParams::A)
        .def_readwrite("psi", &TargetParams::psi)
        .def_readwrite("tau", &TargetParams::tau)
        .def_readwrite("nu", &TargetParams::nu)
        .def_readwrite("phi", &TargetParams::phi);

    py::class_<PhysicalBounds>(m, "PhysicalBounds")
        .def_readonly("range_m", &PhysicalBounds::range_m)
        .def_readonly("velocity_mps", &PhysicalBounds::velocity_mps)
        .def_readonly("angle_deg", &PhysicalBounds::angle_deg)
        .def_readonly("gain_abs", &PhysicalBounds::gain_abs);

    m.def(
        "fisher",
        [](const std::vector<TargetParams>& theta, const CArray& x, const CArray& f,
           const SystemConfig& cfg) {
            return fisher(ParamVector{theta}, frame_from<DelayDopplerFrame>(x), beam_from(f), cfg);
        },
        py::arg("theta"), py::arg("x"), py::arg("f"), py::arg("cfg"));
    m.def(
        "crlb",
        [](const std::vector<TargetParams>& theta, const CArray& x, const CArray& f,
           const SystemConfig& cfg) {
            return crlb_bounds(ParamVector{theta}, frame_from<DelayDopplerFrame>(x), beam_from(f), cfg);
        },
        py::arg("theta"), py::arg("x"), py::arg("f"), py::arg("cfg"),
        "Variance bounds ordered (A, psi, tau, nu, phi) per target.");
    m.def("physical_bounds", &physical_bounds, py::arg("variances"), py::arg("f_c"));
    m.def("param_name", &ParamVector::name, py::arg("index"));

    py::class_<ScenarioSpec>(m, "ScenarioSpec")
        .def(py::init<>())
        .def_readwrite("name", &ScenarioSpec::name)
        .def_readwrite("targets", &ScenarioSpec::targets);

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_readwrite("N", &ExperimentConfig::N)
        .def_readwrite("M", &ExperimentConfig::M)
        .def_readwrite("f_c", &ExperimentConfig::f_c)
        .def_readwrite("B", &ExperimentConfig::B)
        .def_readwrite("N_rf", &ExperimentConfig::N_rf)
        .def_readwrite("P_avg", &ExperimentConfig::P_avg)
        .def_readwrite("sector", &ExperimentConfig::sector)
        .def_readwrite("omega", &ExperimentConfig::omega)
        .def_readwrite("antennas", &ExperimentConfig::antennas)
        .def_readwrite("snr_db", &ExperimentConfig::snr_db)
        .def_readwrite("trials", &ExperimentConfig::trials)
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def_readwrite("threads", &ExperimentConfig::threads)
        .def_readwrite("reference_range_m", &ExperimentConfig::reference_range_m)
        .def_readwrite("reference_rcs", &ExperimentConfig::reference_rcs)
        .def_readwrite("estimator", &ExperimentConfig::estimator)
        .def_readwrite("scenarios", &ExperimentConfig::scenarios)
        .def("system", &ExperimentConfig::system, py::arg("n_antennas"));

    m.def("parse_config", &parse_config, py::arg("text"));
    m.def("load_config", &load_config, py::arg("path"));
    m.def("format_config", &format_config, py::arg("cfg"));

    py::class_<ErrorSummary>(m, "ErrorSummary")
        .def_readonly("range_m", &ErrorSummary::range_m)
        .def_readonly("velocity_mps", &ErrorSummary::velocity_mps)
        .def_readonly("angle_deg", &ErrorSummary::angle_deg)
        .def_readonly("gain_abs", &ErrorSummary::gain_abs)
        .def_readonly("samples", &ErrorSummary::samples);

    py::class_<SweepGroup>(m, "SweepGroup")
        .def_readonly("scenario", &SweepGroup::scenario)
        .def_readonly("snr_db", &SweepGroup::snr_db)
        .def_readonly("n_antennas", &SweepGroup::n_antennas)
        .def_readonly("trials", &SweepGroup::trials)
        .def_readonly("rmse", &SweepGroup::rmse)
        .def_readonly("rmse_target", &SweepGroup::rmse_target)
        .def_readonly("crlb", &SweepGroup::crlb)
        .def_readonly("crlb_target", &SweepGroup::crlb_target)
        .def_readonly("crlb_failure", &SweepGroup::crlb_failure)
        .def_readonly("p_md", &SweepGroup::p_md)
        .def_readonly("p_fa", &SweepGroup::p_fa)
        .def_readonly("detect_rate_target", &SweepGroup::detect_rate_target)
        .def_readonly("all_detected_rate", &SweepGroup::all_detected_rate)
        .def_readonly("failures", &SweepGroup::failures);

    py::class_<TrialRecord>(m, "TrialRecord")
        .def_readonly("scenario", &TrialRecord::scenario)
        .def_readonly("snr_db", &TrialRecord::snr_db)
        .def_readonly("n_antennas", &TrialRecord::n_antennas)
        .def_readonly("seed", &TrialRecord::seed)
        .def_readonly("candidates", &TrialRecord::candidates)
        .def_readonly("false_alarms", &TrialRecord::false_alarms)
        .def_readonly("threshold", &TrialRecord::threshold)
        .def_readonly("failure", &TrialRecord::failure)
        .def_property_readonly("detected", [](const TrialRecord& r) {
            std::vector<bool> d;
            for (const auto& t : r.targets) d.push_back(t.detected);
            return d;
        });

    py::class_<SweepResult>(m, "SweepResult")
        .def_readonly("groups", &SweepResult::groups)
        .def_readonly("records", &SweepResult::records)
        .def("csv", &sweep_csv)
        .def("trials_csv", &trials_csv);

    m.def(
        "run_sweep",
        [](const ExperimentConfig& exp, std::size_t threads) {
            py::gil_scoped_release release;
            return run_sweep(exp, threads);
        },
        py::arg("exp"), py::arg("threads") = 1);
    m.def("run_trial", &run_trial, py::arg("exp"), py::arg("scenario"), py::arg("snr_db"),
          py::arg("n_antennas"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
    m.def("trial_seed", &trial_seed, py::arg("master"), py::arg("scenario"), py::arg("snr_index"),
          py::arg("trial"));
    m.def("sweep_csv", &sweep_csv, py::arg("result"));
    m.def("trials_csv", &trials_csv, py::arg("result"));
    m.def(
        "write_sweep",
        [](const std::filesystem::path& dir, const ExperimentConfig& exp, const SweepResult& r,
           std::size_t threads) { write_sweep(dir, exp, r, threads); },
        py::arg("dir"), py::arg("exp"), py::arg("result"), py::arg("threads") = 1);
}
