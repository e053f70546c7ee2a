#pragma once

#include "vidseg/crf.hpp"

#include <string>

namespace vidseg {

// Writes one propagated sequence to out_dir: PGT label PNGs named
// `<seq_id>_p<offset>.png`, optional binary marginal dumps
// `<seq_id>_p<offset>.mrg` (magic "VSMF", int32 w/h/C, then row-major
// float32 marginals), and appends rows to the run log CSV
// `seq,offset,iters,free_energy,changed_pixels`. changed_pixels counts
// pixels that differ from the previous reference labeling.
struct PropagationWriter {
  std::string out_dir;
  bool dump_marginals = false;

  // Returns the label paths written, in offset order.
  std::vector<std::string> write(const std::string& seq_id, const LabelMap& gt_labels,
                                 const PropagationResult& result, std::ostream& run_log) const;
};

void write_marginals(const MarginalField& marginals, const std::string& path);
MarginalField read_marginals(const std::string& path);

}  // namespace vidseg
