#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fftkf/analysis.hpp"
#include "fftkf/kalman.hpp"
#include "fftkf/optimizer.hpp"
#include "fftkf/privacy.hpp"
#include "fftkf/problems.hpp"
#include "fftkf/rng.hpp"
#include "fftkf/spectral.hpp"

namespace py = pybind11;

using namespace fftkf;

// "lambda" is a Python keyword, so every binding spells it "lambda_".

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Differentially private optimization with spectral noise shaping and a "
      "gradient-tracking Kalman filter.";
  m.attr("__version__") = "0.1.0";

  // rng
  py::enum_<Stream>(m, "Stream")
      .value("INIT", Stream::kInit)
      .value("SAMPLING", Stream::kSampling)
      .value("GRAD_NOISE", Stream::kGradNoise)
      .value("FD_NOISE", Stream::kFdNoise)
      .value("TEST", Stream::kTest);

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"),
           py::arg("stream"))
      .def(py::init([](std::uint64_t seed, Stream s) {
             return make_rng(seed, s);
           }),
           py::arg("seed"), py::arg("stream"))
      .def("next_u64", &Rng::next_u64)
      .def("uniform", &Rng::uniform)
      .def("gaussian", &Rng::gaussian)
      .def("counter", &Rng::counter);

  // spectral
  py::class_<spectral::SpectralMask>(m, "SpectralMask")
      .def_readonly("phi", &spectral::SpectralMask::phi)
      .def_readonly("k0", &spectral::SpectralMask::k0)
      .def_readonly("rho", &spectral::SpectralMask::rho)
      .def_readonly("alpha", &spectral::SpectralMask::alpha)
      .def_readonly("lambda_", &spectral::SpectralMask::lambda)
      .def("__len__", &spectral::SpectralMask::size)
      .def("is_identity", &spectral::SpectralMask::is_identity)
      .def("__repr__", [](const spectral::SpectralMask& mk) {
        return "SpectralMask(d=" + std::to_string(mk.size()) +
               ", k0=" + std::to_string(mk.k0) +
               (mk.is_identity() ? ", identity)" : ")");
      });

  m.def("next_pow2", &spectral::next_pow2, py::arg("n"));
  m.def("is_pow2", &spectral::is_pow2, py::arg("n"));
  m.def("build_mask", &spectral::build_mask, py::arg("d"), py::arg("lambda_"),
        py::arg("rho"), py::arg("alpha") = 0.0);
  m.def("identity_mask", &spectral::identity_mask, py::arg("d"));
  m.def("dft_forward", &spectral::dft_forward, py::arg("v"));
  m.def("dft_inverse",
        [](const spectral::Spectrum& s) { return spectral::dft_inverse(s); },
        py::arg("spectrum"));
  m.def("naive_dft", &spectral::naive_dft, py::arg("v"));
  m.def("apply_filter", &spectral::apply_filter, py::arg("v"), py::arg("mask"));
  m.def("operator_eigenvalues", &spectral::operator_eigenvalues,
        py::arg("mask"));
  m.def("fft_call_count", &spectral::fft_call_count);
  m.def("reset_fft_call_count", &spectral::reset_fft_call_count);

  // privacy
  py::register_exception<privacy::InfeasiblePrivacyTarget>(
      m, "InfeasiblePrivacyTarget");

  py::class_<privacy::PrivacyParams>(m, "PrivacyParams")
      .def(py::init<>())
      .def_readwrite("clip_C", &privacy::PrivacyParams::clip_C)
      .def_readwrite("sigma_w", &privacy::PrivacyParams::sigma_w)
      .def_readwrite("sigma_fd", &privacy::PrivacyParams::sigma_fd)
      .def_readwrite("sampling_rate_q", &privacy::PrivacyParams::sampling_rate_q)
      .def_readwrite("target_epsilon", &privacy::PrivacyParams::target_epsilon)
      .def_readwrite("target_delta", &privacy::PrivacyParams::target_delta)
      .def("validate", &privacy::PrivacyParams::validate);

  m.def("clip", &privacy::clip, py::arg("v"), py::arg("C"));
  m.def("privatize_gradient", &privacy::privatize_gradient,
        py::arg("per_sample_grads"), py::arg("C"), py::arg("sigma_w"),
        py::arg("rng"));
  m.def("shape_noise", &privacy::shape_noise, py::arg("w"), py::arg("mask"));

  py::class_<privacy::AccountantState>(m, "AccountantState")
      .def_readonly("steps_taken", &privacy::AccountantState::steps_taken)
      .def_readonly("releases_per_step",
                    &privacy::AccountantState::releases_per_step)
      .def_readonly("rdp_orders", &privacy::AccountantState::rdp_orders)
      .def_readonly("accumulated_rdp",
                    &privacy::AccountantState::accumulated_rdp);

  m.def("default_rdp_orders", &privacy::default_rdp_orders);
  m.def("make_accountant", &privacy::make_accountant,
        py::arg("releases_per_step"));
  m.def("subsampled_gaussian_rdp", &privacy::subsampled_gaussian_rdp,
        py::arg("q"), py::arg("z"), py::arg("a"));
  m.def("account_step", &privacy::account_step, py::arg("state"), py::arg("q"),
        py::arg("z"));
  m.def("epsilon_at_delta", &privacy::epsilon_at_delta, py::arg("state"),
        py::arg("delta"));
  m.def("calibrate_sigma", &privacy::calibrate_sigma,
        py::arg("target_epsilon"), py::arg("target_delta"), py::arg("q"),
        py::arg("steps"), py::arg("releases_per_step"),
        py::call_guard<py::gil_scoped_release>());

  // kalman
  py::class_<kalman::KalmanState>(m, "KalmanState")
      .def_readonly("g_tilde", &kalman::KalmanState::g_tilde)
      .def_readonly("d_prev", &kalman::KalmanState::d_prev)
      .def_readonly("kappa", &kalman::KalmanState::kappa)
      .def_readonly("gamma", &kalman::KalmanState::gamma)
      .def_readonly("initialized", &kalman::KalmanState::initialized);

  m.def("make_state", &kalman::make_state, py::arg("d"), py::arg("kappa"),
        py::arg("gamma"));
  m.def("predict", &kalman::predict, py::arg("state"), py::arg("grads_at_x"),
        py::arg("grads_at_shifted"), py::arg("C"), py::arg("sigma_fd"),
        py::arg("rng"), py::arg("batch_denom") = 0);
  m.def("correct", &kalman::correct, py::arg("prediction"), py::arg("g_hat"),
        py::arg("kappa"));
  m.def("advance", &kalman::advance, py::arg("state"), py::arg("new_g_tilde"),
        py::arg("new_step_d"));

  // analysis
  m.def("rho_star", &analysis::rho_star, py::arg("lambda_"), py::arg("rho"),
        py::arg("d"));

  py::class_<analysis::Lemma1Report>(m, "Lemma1Report")
      .def_readonly("d", &analysis::Lemma1Report::d)
      .def_readonly("lambda_", &analysis::Lemma1Report::lambda)
      .def_readonly("rho", &analysis::Lemma1Report::rho)
      .def_readonly("sigma_w", &analysis::Lemma1Report::sigma_w)
      .def_readonly("rho_star_analytic",
                    &analysis::Lemma1Report::rho_star_analytic)
      .def_readonly("trace_mc", &analysis::Lemma1Report::trace_mc)
      .def_readonly("trace_analytic", &analysis::Lemma1Report::trace_analytic)
      .def_readonly("bias_norm_mc", &analysis::Lemma1Report::bias_norm_mc)
      .def_readonly("n_samples", &analysis::Lemma1Report::n_samples)
      .def("__repr__", [](const analysis::Lemma1Report& r) {
        return "Lemma1Report(trace_mc=" + std::to_string(r.trace_mc) +
               ", trace_analytic=" + std::to_string(r.trace_analytic) +
               ", bias_norm_mc=" + std::to_string(r.bias_norm_mc) + ")";
      });

  m.def("verify_lemma1",
        py::overload_cast<std::size_t, double, double, double, std::size_t,
                          Rng&>(&analysis::verify_lemma1),
        py::arg("d"), py::arg("lambda_"), py::arg("rho"), py::arg("sigma_w"),
        py::arg("n_samples"), py::arg("rng"),
        py::call_guard<py::gil_scoped_release>());
  m.def("verify_lemma1",
        py::overload_cast<const spectral::SpectralMask&, double, std::size_t,
                          Rng&>(&analysis::verify_lemma1),
        py::arg("mask"), py::arg("sigma_w"), py::arg("n_samples"),
        py::arg("rng"), py::call_guard<py::gil_scoped_release>());
  m.def("filter_bias_norm", &analysis::filter_bias_norm, py::arg("mask"),
        py::arg("rng"), py::arg("max_iters") = 30, py::arg("tol") = 1e-8);

  py::class_<analysis::Theorem2Constants>(m, "Theorem2Constants")
      .def_readonly("eta", &analysis::Theorem2Constants::eta)
      .def_readonly("kappa", &analysis::Theorem2Constants::kappa)
      .def_readonly("gamma", &analysis::Theorem2Constants::gamma)
      .def_readonly("L", &analysis::Theorem2Constants::L)
      .def_readonly("beta", &analysis::Theorem2Constants::beta)
      .def_readonly("C1", &analysis::Theorem2Constants::C1)
      .def_readonly("valid", &analysis::Theorem2Constants::valid)
      .def_readonly("noise_coefficient",
                    &analysis::Theorem2Constants::noise_coefficient)
      .def_readonly("bias_coefficient",
                    &analysis::Theorem2Constants::bias_coefficient)
      .def_readonly("dp_term_multiplier",
                    &analysis::Theorem2Constants::dp_term_multiplier);

  m.def("theorem2_constants",
        py::overload_cast<double, double, double, double, double>(
            &analysis::theorem2_constants),
        py::arg("eta"), py::arg("kappa"), py::arg("gamma"), py::arg("L"),
        py::arg("beta"));
  m.def("theorem2_constants",
        py::overload_cast<double, double, double, double, double, double,
                          double, std::size_t, double>(
            &analysis::theorem2_constants),
        py::arg("eta"), py::arg("kappa"), py::arg("gamma"), py::arg("L"),
        py::arg("beta"), py::arg("lambda_"), py::arg("rho"), py::arg("d"),
        py::arg("sigma_w"));

  py::class_<analysis::NoiseReductionReport>(m, "NoiseReductionReport")
      .def_readonly("reduction_pct",
                    &analysis::NoiseReductionReport::reduction_pct)
      .def_readonly("bias_inflation_pct",
                    &analysis::NoiseReductionReport::bias_inflation_pct)
      .def("__repr__", [](const analysis::NoiseReductionReport& r) {
        return "NoiseReductionReport(reduction_pct=" +
               std::to_string(r.reduction_pct) + ", bias_inflation_pct=" +
               std::to_string(r.bias_inflation_pct) + ")";
      });

  m.def("noise_reduction_report", &analysis::noise_reduction_report,
        py::arg("lambda_"), py::arg("rho"));

  // problems
  py::class_<problems::Problem, std::shared_ptr<problems::Problem>>(m,
                                                                    "Problem")
      .def("dimension", &problems::Problem::dimension)
      .def("num_examples", &problems::Problem::num_examples)
      .def("per_sample_loss", &problems::Problem::per_sample_loss,
           py::arg("x"), py::arg("xi"))
      .def("per_sample_gradient", &problems::Problem::per_sample_gradient,
           py::arg("x"), py::arg("xi"))
      .def("batch_gradients", &problems::Problem::batch_gradients,
           py::arg("x"), py::arg("xis"))
      .def("has_exact_gradient", &problems::Problem::has_exact_gradient)
      .def("exact_full_gradient", &problems::Problem::exact_full_gradient,
           py::arg("x"))
      .def("full_loss", &problems::Problem::full_loss, py::arg("x"))
      .def("has_test_accuracy", &problems::Problem::has_test_accuracy)
      .def("test_accuracy", &problems::Problem::test_accuracy, py::arg("x"))
      .def("initial_point", &problems::Problem::initial_point, py::arg("rng"));

  py::class_<problems::QuadraticProblem, problems::Problem,
             std::shared_ptr<problems::QuadraticProblem>>(m,
                                                          "QuadraticProblem")
      .def(py::init<std::size_t, double, double, double, std::size_t,
                    std::uint64_t>(),
           py::arg("d"), py::arg("mu"), py::arg("L"), py::arg("tau"),
           py::arg("n_samples"), py::arg("seed"))
      .def("smoothness_L", &problems::QuadraticProblem::smoothness_L)
      .def("strong_convexity_mu",
           &problems::QuadraticProblem::strong_convexity_mu)
      .def("optimum", &problems::QuadraticProblem::optimum)
      .def("hessian_apply", &problems::QuadraticProblem::hessian_apply,
           py::arg("v"));

  py::class_<problems::MnistDataset,
             std::shared_ptr<problems::MnistDataset>>(m, "MnistDataset")
      .def_readonly("images", &problems::MnistDataset::images)
      .def_readonly("labels", &problems::MnistDataset::labels)
      .def_readonly("n", &problems::MnistDataset::n)
      .def("__len__",
           [](const problems::MnistDataset& ds) { return ds.n; });

  m.def("load_mnist_idx", &problems::load_mnist_idx, py::arg("images_path"),
        py::arg("labels_path"), py::arg("subset_n") = 0);
  m.def("write_mnist_idx", &problems::write_mnist_idx, py::arg("images_path"),
        py::arg("labels_path"), py::arg("dataset"));
  m.def("make_synthetic_digits", &problems::make_synthetic_digits,
        py::arg("n"), py::arg("seed"));

  py::class_<problems::LogisticProblem, problems::Problem,
             std::shared_ptr<problems::LogisticProblem>>(m, "LogisticProblem")
      .def(py::init<std::shared_ptr<const problems::MnistDataset>,
                    std::shared_ptr<const problems::MnistDataset>>(),
           py::arg("train"), py::arg("test"));

  py::class_<problems::MlpProblem, problems::Problem,
             std::shared_ptr<problems::MlpProblem>>(m, "MlpProblem")
      .def(py::init<std::shared_ptr<const problems::MnistDataset>,
                    std::shared_ptr<const problems::MnistDataset>>(),
           py::arg("train"), py::arg("test"));

  m.def("gradient_eval_count", &problems::gradient_eval_count);
  m.def("reset_gradient_eval_count", &problems::reset_gradient_eval_count);

  // optimizer
  py::enum_<optimizer::BaseKind>(m, "BaseKind")
      .value("SGD", optimizer::BaseKind::kSgd)
      .value("MOMENTUM", optimizer::BaseKind::kMomentum)
      .value("ADAM", optimizer::BaseKind::kAdam);

  py::class_<optimizer::BaseOptimizer>(m, "BaseOptimizer")
      .def(py::init<>())
      .def_readwrite("kind", &optimizer::BaseOptimizer::kind)
      .def_readwrite("learning_rate", &optimizer::BaseOptimizer::learning_rate)
      .def_readwrite("momentum_beta", &optimizer::BaseOptimizer::momentum_beta)
      .def_readwrite("adam_beta1", &optimizer::BaseOptimizer::adam_beta1)
      .def_readwrite("adam_beta2", &optimizer::BaseOptimizer::adam_beta2)
      .def_readwrite("adam_epsilon", &optimizer::BaseOptimizer::adam_epsilon)
      .def("validate", &optimizer::BaseOptimizer::validate);

  py::enum_<optimizer::Method>(m, "Method")
      .value("DPSGD", optimizer::Method::kDpsgd)
      .value("DISK", optimizer::Method::kDisk)
      .value("FFTKF", optimizer::Method::kFftkf);

  m.def("method_name", &optimizer::method_name, py::arg("method"));
  m.def("parse_method", &optimizer::parse_method, py::arg("name"));

  py::class_<optimizer::FilterParams>(m, "FilterParams")
      .def(py::init<>())
      .def_readwrite("lambda_", &optimizer::FilterParams::lambda)
      .def_readwrite("rho", &optimizer::FilterParams::rho)
      .def_readwrite("alpha", &optimizer::FilterParams::alpha);

  py::class_<optimizer::KalmanParams>(m, "KalmanParams")
      .def(py::init<>())
      .def_readwrite("kappa", &optimizer::KalmanParams::kappa)
      .def_readwrite("gamma", &optimizer::KalmanParams::gamma);

  py::class_<optimizer::MethodConfig>(m, "MethodConfig")
      .def(py::init<>())
      .def_readwrite("method", &optimizer::MethodConfig::method)
      .def_readwrite("privacy", &optimizer::MethodConfig::privacy)
      .def_readwrite("filter", &optimizer::MethodConfig::filter)
      .def_readwrite("kalman", &optimizer::MethodConfig::kalman)
      .def_readwrite("base", &optimizer::MethodConfig::base)
      .def_readwrite("steps", &optimizer::MethodConfig::steps)
      .def_readwrite("batch_size", &optimizer::MethodConfig::batch_size)
      .def_readwrite("seed", &optimizer::MethodConfig::seed)
      .def_readwrite("eval_interval", &optimizer::MethodConfig::eval_interval)
      .def_readwrite("record_timing", &optimizer::MethodConfig::record_timing)
      .def("validate", &optimizer::MethodConfig::validate);

  py::class_<optimizer::RunResult>(m, "RunResult")
      .def_readonly("train_loss", &optimizer::RunResult::train_loss)
      .def_readonly("grad_error", &optimizer::RunResult::grad_error)
      .def_readonly("raw_grad_error", &optimizer::RunResult::raw_grad_error)
      .def_readonly("epsilon", &optimizer::RunResult::epsilon)
      .def_readonly("wall_ms", &optimizer::RunResult::wall_ms)
      .def_readonly("eval_steps", &optimizer::RunResult::eval_steps)
      .def_readonly("test_acc", &optimizer::RunResult::test_acc)
      .def_readonly("final_epsilon", &optimizer::RunResult::final_epsilon)
      .def_readonly("sigma_w", &optimizer::RunResult::sigma_w)
      .def_readonly("sigma_fd", &optimizer::RunResult::sigma_fd)
      .def_readonly("noise_multiplier",
                    &optimizer::RunResult::noise_multiplier)
      .def_readonly("final_x", &optimizer::RunResult::final_x)
      .def("__repr__", [](const optimizer::RunResult& r) {
        return "RunResult(steps=" + std::to_string(r.train_loss.size()) +
               ", final_epsilon=" + std::to_string(r.final_epsilon) + ")";
      });

  m.def("run", &optimizer::run, py::arg("config"), py::arg("problem"),
        py::call_guard<py::gil_scoped_release>());
}
