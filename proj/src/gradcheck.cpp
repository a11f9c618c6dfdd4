#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "psynth/error.hpp"
#include "psynth/gradcheck.hpp"

namespace psynth {
namespace {

// Sign of every LeakyReLU output and of every L1 residual: the points where the
// loss is not differentiable.
std::vector<bool> kink_pattern(const ForwardCache& cache, const std::vector<double>& pred,
                               const std::vector<double>& target) {
  std::vector<bool> signs;
  auto add = [&signs](const Tensor& t) {
    for (double v : t.data) signs.push_back(v > 0.0);
  };
  for (std::size_t l = 1; l < cache.encoder.size(); ++l) add(cache.encoder[l]);
  for (std::size_t s = 1; s < cache.decoder_out.size(); ++s) add(cache.decoder_out[s]);
  for (std::size_t i = 0; i < pred.size(); ++i) signs.push_back(pred[i] > target[i]);
  return signs;
}

struct Probe {
  double loss = 0.0;
  std::vector<bool> kinks;
};

Probe probe_at(const Parameters& p, const ModelConfig& c, const ConditioningInput& cond, const std::vector<double>& target,
               const LossConfig& loss) {
  ForwardCache cache;
  const auto out = forward(p, c, cond, cache);
  return {total_loss(out.samples, target, loss).total, kink_pattern(cache, out.samples, target)};
}

}  // namespace

ModelConfig gradcheck_config_tiny() {
  ModelConfig c;
  c.encoder_layers = 3;
  c.base_filters = 4;
  c.internal_length = 2048;
  c.output_length = 2000;
  return c;
}

ModelConfig gradcheck_config_small() {
  ModelConfig c;
  c.encoder_layers = 5;
  c.base_filters = 8;
  c.internal_length = 4096;
  c.output_length = 4000;
  return c;
}

ModelConfig gradcheck_config(std::string_view size) {
  if (size == "tiny") return gradcheck_config_tiny();
  if (size == "small") return gradcheck_config_small();
  throw Error(ErrorCode::InvalidArgument, "unknown gradcheck size '" + std::string(size) + "'");
}

GradCheckReport gradient_check(const ModelConfig& base_config, const LossConfig& loss, const GradCheckOptions& opts) {
  if (!(opts.eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
  if (opts.n_params == 0) throw Error(ErrorCode::InvalidArgument, "n_params must be positive");
  ModelConfig config = base_config;
  config.seed = opts.seed;
  if (parameter_count(config) > 100000) throw Error(ErrorCode::InvalidConfig, "gradient check needs <= 1e5 parameters");

  std::mt19937_64 rng(opts.seed ^ 0x5EEDull);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Parameters params = build(config);

  TimbralVector fs;
  fs.normalized = true;
  Envelope env = parametric_envelope(2.0, 40.0, 1.0, config.output_length);
  std::vector<double> target(config.output_length, 0.0);
  if (opts.zero_inputs) {
    std::fill(env.values.begin(), env.values.end(), 0.0);
  } else {
    for (auto& v : fs.values) v = unit(rng);
    // A broadband envelope keeps every STFT bin of the prediction away from |X| = 0,
    // where the magnitude is not differentiable.
    for (auto& v : env.values) v = 0.2 + 0.8 * unit(rng);
    // Targets kept away from zero so the L1 kink is never crossed by a perturbation.
    for (auto& t : target) t = (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + 0.4 * unit(rng));
  }
  const auto cond = make_conditioning(env, fs, config);

  ForwardCache cache;
  const auto out = forward(params, config, cond, cache);
  std::vector<double> g_out(config.output_length);
  total_loss_grad(out.samples, target, loss, g_out);
  std::vector<double> grads(params.size(), 0.0);
  backward(params, config, cache, g_out, grads);

  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  GradCheckReport report;
  const auto base_kinks = kink_pattern(cache, out.samples, target);
  Parameters probe = params;
  const std::size_t max_draws = 20 * opts.n_params;
  while (report.entries.size() < opts.n_params) {
    if (report.kink_crossings + report.entries.size() >= max_draws) {
      throw Error(ErrorCode::InvalidConfig, "almost every probe crosses a kink; reduce eps");
    }
    const std::size_t idx = pick(rng);
    const double saved = probe.values[idx];
    probe.values[idx] = saved + opts.eps;
    const Probe up = probe_at(probe, config, cond, target, loss);
    probe.values[idx] = saved - opts.eps;
    const Probe down = probe_at(probe, config, cond, target, loss);
    probe.values[idx] = saved;
    if (up.kinks != base_kinks || down.kinks != base_kinks) {
      ++report.kink_crossings;
      continue;
    }

    GradCheckEntry e;
    e.index = idx;
    e.analytic = grads[idx];
    e.numeric = (up.loss - down.loss) / (2.0 * opts.eps);
    e.rel_err = std::abs(e.analytic - e.numeric) / std::max(std::abs(e.analytic), 1e-8);
    report.max_rel_err = std::max(report.max_rel_err, e.rel_err);
    report.max_abs_analytic = std::max(report.max_abs_analytic, std::abs(e.analytic));
    report.max_abs_numeric = std::max(report.max_abs_numeric, std::abs(e.numeric));
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace psynth
