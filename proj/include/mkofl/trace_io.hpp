#pragma once

#include <string>
#include <vector>

#include "mkofl/orchestrator.hpp"

namespace mkofl {

// Version of the CSV column layouts below. Bumped whenever a column changes.
inline constexpr int kTraceSchemaVersion = 1;

// trace.csv        trial,round,selected_kernel,next_kernel,mse,round_sq_error,model_norm_sq,
//                  uplink_scalars,downlink_scalars,eta_local,eta_global
// predictions.csv  trial,round,node,sample_id,label,prediction
// mse_trace.csv    round,mse_mean,mse_sd,uplink_scalars,downlink_scalars,cumulative_uplink_scalars
// fraction.csv     round,best_fraction,kernel_1..kernel_P
// node_detail.csv  trial,round,node,proposal,kernel,loss,pmf   (verbose runs only)
//
// Trials, rounds, nodes and kernels are one-based in every file.
std::vector<std::string> write_run_csvs(const ExperimentResult& result, const std::string& dir);

// Reads one trial (zero-based) back from a run directory. Detail rows are
// attached when node_detail.csv exists; require_detail turns their absence
// into an IngestionError.
TrialTrace read_trial_trace(const std::string& dir, std::size_t trial, bool require_detail);

// Minimal CSV table reader used for run artifacts.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};
CsvTable read_csv_table(const std::string& path);

}  // namespace mkofl
