// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>

#include "fairgen/error.hpp"
#include "fairgen/metrics.hpp"
#include "fairgen/pipeline.hpp"
#include "fairgen/policy.hpp"

namespace py = pybind11;
using namespace fairgen;

namespace {

using PipelineOp = void (*)(const RunConfig&, std::ostream&);

// Shared driver for the five pipeline operations: parse the config file,
// apply the optional overrides, run, and hand back the log text.
std::string run_op(PipelineOp op, const std::string& config,
                   std::optional<std::uint64_t> seed,
                   std::optional<std::string> out) {
  RunConfig cfg = parse_run_config(config);
  if (seed) cfg.seed = *seed;
  if (out) cfg.out_dir = *out;
  std::ostringstream log;
  op(cfg, log);
  return log.str();
}

py::dict reinforce_rewards(const std::vector<double>& fact_quality,
                           const std::vector<double>& cf_quality, double eta) {
  RewardPair p;
  p.fact.samples.resize(fact_quality.size());
  p.cf.samples.resize(cf_quality.size());
  p.fact.quality = fact_quality;
  p.cf.quality = cf_quality;
  for (double q : fact_quality) p.fact.mean_quality += q;
  for (double q : cf_quality) p.cf.mean_quality += q;
  if (!fact_quality.empty())
    p.fact.mean_quality /= static_cast<double>(fact_quality.size());
  if (!cf_quality.empty())
    p.cf.mean_quality /= static_cast<double>(cf_quality.size());
  p.delta = compute_delta(p.fact, p.cf);
  p.sgn = sign_of(p.delta);
  compute_rewards(p, eta);

  py::dict d;
  d["delta"] = p.delta;
  d["sgn"] = p.sgn;
  d["w"] = p.w;
  d["r_fact"] = p.r_fact;
  d["r_cf"] = p.r_cf;
  d["rw_fact"] = p.rw_fact;
  d["rw_cf"] = p.rw_cf;
  d["adv_fact"] = p.adv_fact;
  d["adv_cf"] = p.adv_cf;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fairgen, m) {
  m.doc() =
      "Personalized explanation generation with counterfactual-fairness "
      "fine-tuning: corpus synthesis, training, evaluation, and the reward "
      "algebra underneath.";
  m.attr("__version__") = "0.1.0";

  // Registered base first so the derived translators below take precedence.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ArtifactError>(m, "ArtifactError",
                                        PyExc_FileNotFoundError);
  py::register_exception<NumericError>(m, "NumericError",
                                       PyExc_ArithmeticError);

  const auto op = [&m](const char* name, PipelineOp fn, const char* doc) {
    m.def(
        name,
        [fn](const std::string& config, std::optional<std::uint64_t> seed,
             std::optional<std::string> out) {
          return run_op(fn, config, seed, out);
        },
        py::arg("config"), py::arg("seed") = py::none(),
        py::arg("out") = py::none(), doc);
  };
  op("corpus", &run_corpus,
     "Synthesize the biased review corpus and feature lexicon described by "
     "the config file. Returns the run log.");
  op("pretrain", &run_pretrain,
     "Train a generator (optionally against an attribute discriminator) and "
     "write the checkpoint. Returns the run log.");
  op("finetune", &run_finetune,
     "Policy-gradient counterfactual-fairness fine-tuning of a pretrained "
     "checkpoint. Returns the run log.");
  op("evaluate", &run_eval,
     "Generate factual and counterfactual explanations for the test split "
     "and write report.csv/report.json/hist.csv. Returns the run log.");
  op("sweep", &run_sweep,
     "Fine-tune and evaluate across the configured lambda grid and write "
     "sweep.csv. Returns the run log.");

  m.def("bleu", &bleu, py::arg("candidates"), py::arg("references"),
        py::arg("n") = 4,
        "Corpus-level BLEU-n over tokenized candidates and references, in "
        "[0, 1].");
  m.def("rouge", &rouge, py::arg("candidate"), py::arg("reference"),
        py::arg("variant") = 'L',
        "ROUGE F1 for one tokenized pair; variant is '1', '2' or 'L'.");
  m.def("rmse", &rmse, py::arg("predictions"), py::arg("targets"),
        "Root mean squared error between two equal-length sequences.");

  m.def("sign_of", &sign_of, py::arg("delta"),
        "Sign of a quality gap; exactly zero maps to 0.");
  m.def("promotion_weight", &promotion_weight, py::arg("sgn"), py::arg("eta"),
        "Weight carried by the factual world's rewards; the lower-quality "
        "world always ends up with eta.");
  m.def("reinforce_rewards", &reinforce_rewards, py::arg("fact_quality"),
        py::arg("cf_quality"), py::arg("eta") = 0.6,
        "Full reward pipeline for one record's paired worlds: gap, sign, "
        "promotion weight, per-sample rewards and centered advantages.");
}
