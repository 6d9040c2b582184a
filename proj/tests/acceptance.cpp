// Acceptance runner: one PASS/FAIL line per primary criterion.
//   --suite fast  property and contract checks (seconds)
//   --suite e2e   desk-scale training and evaluation (hours on one core; artifacts cached in --work-dir)

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <sstream>

#include "contracts.hpp"
#include "desk_run.hpp"

using namespace scalepart;
using namespace scalepart::testing;

namespace {

int failures = 0;

void report(const std::string& name, const CheckResult& r) {
  std::cout << (r.passed ? "PASS " : "FAIL ") << name << ": " << r.detail << std::endl;
  failures += !r.passed;
}

template <typename Fn>
void guarded(const std::string& name, Fn&& fn) {
  try {
    report(name, fn());
  } catch (const std::exception& e) {
    report(name, {false, std::string("exception: ") + e.what()});
  }
}

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

double delta_at(const std::vector<SweepRow>& rows, double delta) {
  for (const auto& r : rows)
    if (std::abs(r.delta - delta) < 1e-9) return r.delta_iou;
  throw std::runtime_error("sweep has no row for delta " + std::to_string(delta));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string suite = "fast", work_dir = "desk_run";
  DeskRunConfig cfg;
  double budget_hours = 4.0;
  app.add_option("--suite", suite)->check(CLI::IsMember({"fast", "e2e", "all"}));
  app.add_option("--work-dir", work_dir, "Trained model, logs and results of the desk-scale run");
  app.add_option("--train-shapes", cfg.train_shapes);
  app.add_option("--eval-shapes", cfg.eval_shapes);
  app.add_option("--encoder-epochs", cfg.encoder_epochs);
  app.add_option("--decoder-epochs", cfg.decoder_epochs);
  app.add_option("--budget-hours", budget_hours);
  CLI11_PARSE(app, argc, argv);

  if (suite == "fast" || suite == "all") {
    guarded("gradient suite", [] { return gradient_suite_check(); });
    guarded("loss identities", loss_identities_check);
    guarded("tri-plane fidelity", triplane_fidelity_check);
    guarded("FiLM contracts", film_contracts_check);
    guarded("full-segmentation post-processing contracts", post_processing_contracts_check);
    guarded("pipeline contracts", pipeline_contracts_check);
    guarded("determinism", [] {
      const CheckResult train = training_determinism_check(), infer = inference_determinism_check();
      return CheckResult{train.passed && infer.passed, train.detail + "; " + infer.detail};
    });
  }

  if (suite == "e2e" || suite == "all") {
    DeskRunResult r;
    try {
      r = desk_run(cfg, work_dir, [](const std::string& m) { std::cerr << "[desk] " << m << std::endl; });
    } catch (const std::exception& e) {
      report("desk-scale end-to-end", {false, std::string("exception: ") + e.what()});
      report("scale sweep direction", {false, "no trained model"});
      return 1;
    }
    const double hours = (r.encoder_seconds + r.decoder_seconds + r.eval_seconds) / 3600.0;
    const bool e2e_ok = r.interactive_no_scale >= 0.60 && r.interactive_scale >= r.interactive_no_scale &&
                        r.full_no_scale >= r.interactive_no_scale - 0.05 && hours <= budget_hours;
    report("desk-scale end-to-end",
           {e2e_ok, std::to_string(cfg.train_shapes) + " train / " + std::to_string(cfg.eval_shapes) +
                        " held-out shapes: interactive mIoU " + num(r.interactive_no_scale) + " (>= 0.60), +scale " +
                        num(r.interactive_scale) + " (>= no-scale), full " + num(r.full_no_scale) + " (>= " +
                        num(r.interactive_no_scale - 0.05) + "), full +scale " + num(r.full_scale) + "; runtime " +
                        num(hours, 2) + " h (encoder " + num(r.encoder_seconds / 60, 1) + " min, decoder " +
                        num(r.decoder_seconds / 60, 1) + " min, eval " + num(r.eval_seconds / 60, 1) + " min" +
                        (r.cached_training ? ", training reused from cache" : "") + ") <= " + num(budget_hours, 1) +
                        " h"});

    // Magnitudes on each side of the chain: the small perturbations must all stay below every
    // medium one, and the medium ones below the +3 perturbation.
    const double p01 = std::abs(delta_at(r.sweep, 0.1)), m01 = std::abs(delta_at(r.sweep, -0.1));
    const double p05 = std::abs(delta_at(r.sweep, 0.5)), m05 = std::abs(delta_at(r.sweep, -0.5));
    const double p3 = std::abs(delta_at(r.sweep, 3.0));
    const bool sweep_ok = std::max(p01, m01) < std::min(p05, m05) && std::max(p05, m05) < p3;
    report("scale sweep direction", {sweep_ok, "|dIoU| at +0.1/-0.1 " + num(p01) + "/" + num(m01) + " < at +0.5/-0.5 " +
                                                   num(p05) + "/" + num(m05) + " < at +3 " + num(p3)});
  }

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
