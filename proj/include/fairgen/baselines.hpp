// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fairgen/corpus.hpp"
#include "fairgen/model.hpp"
#include "fairgen/quality.hpp"

namespace fairgen {

struct NormSpec {
  QualityOracle oracle = QualityOracle::length();
  double threshold = 0.10;  // fraction of the original gap to stop at

  void validate() const;
};

struct NormResult {
  std::vector<Record> records;  // kept records, input order preserved
  std::vector<int> removed;     // input indices, in removal order
  double original_gap = 0.0;    // max pairwise group-mean gap before
  double final_gap = 0.0;       // and after
};

// Gap-trimming pre-processing: repeatedly pick the pair of groups whose mean
// qualities differ the most and remove one record from the larger group —
// its best record when that group is the higher-quality one, its worst
// otherwise — until the max gap is within threshold * original gap. Size
// ties pick the lower-mean group; record ties remove the earliest. A group
// that would be emptied aborts with a diagnostic.
NormResult norm_preprocess(const std::vector<Record>& records,
                           const AttributeSpace& attrs, const NormSpec& spec);

// Inference-time attribute neutralization. Transformer: every other token's
// attention to the attribute position is masked off. Recurrent: the
// attribute rows are replaced with fresh uniform [-1,1] values. The returned
// view leaves all non-attribute parameters bitwise identical and the source
// model untouched.
GeneratorModel nattr_transform(const GeneratorModel& model,
                               std::uint64_t seed);

}  // namespace fairgen
