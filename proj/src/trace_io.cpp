#include "mkofl/trace_io.hpp"

#include <cmath>
#include <filesystem>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mkofl/errors.hpp"

namespace mkofl {

namespace {

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw IngestionError("cannot write " + path);
    out_.precision(17);
  }
  template <typename... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << '\n';
  }
  std::ostream& raw() { return out_; }

 private:
  std::ofstream out_;
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// strtod rather than stod: subnormal PMF entries must round-trip, not throw.
double to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw IngestionError("malformed number '" + s + "' in trace file");
  return v;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw IngestionError("column '" + name + "' missing from trace file");
}

CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot read " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(path + " is empty");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split(line));
  }
  return t;
}

std::vector<std::string> write_run_csvs(const ExperimentResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  const auto& cfg = result.config;
  const std::size_t T = result.streams.num_rounds;
  const std::size_t P = cfg.num_kernels;
  std::vector<std::string> files;
  auto path = [&](const char* name) {
    files.push_back(name);
    return (fs::path(dir) / name).string();
  };

  {
    CsvWriter w(path("trace.csv"));
    w.row("trial", "round", "selected_kernel", "next_kernel", "mse", "round_sq_error", "model_norm_sq",
          "uplink_scalars", "downlink_scalars", "eta_local", "eta_global");
    for (const auto& tr : result.trials)
      for (const auto& r : tr.rounds)
        w.row(tr.trial + 1, r.round, r.selected + 1, r.next_index + 1, r.mse, r.round_sq_error,
              r.model_norm_sq, r.uplink_scalars, r.downlink_scalars, r.steps.local, r.steps.global);
  }
  {
    CsvWriter w(path("predictions.csv"));
    w.row("trial", "round", "node", "sample_id", "label", "prediction");
    for (const auto& tr : result.trials)
      for (const auto& r : tr.rounds)
        for (std::size_t k = 0; k < r.labels.size(); ++k)
          w.row(tr.trial + 1, r.round, k + 1, r.sample_ids[k], r.labels[k], r.predictions[k]);
  }
  {
    CsvWriter w(path("mse_trace.csv"));
    w.row("round", "mse_mean", "mse_sd", "uplink_scalars", "downlink_scalars", "cumulative_uplink_scalars");
    std::size_t cumulative = 0;
    const auto& first = result.trials.front();
    for (std::size_t t = 0; t < T; ++t) {
      double var = 0.0;
      for (const auto& tr : result.trials) {
        const double d = tr.rounds[t].mse - result.mean_mse[t];
        var += d * d;
      }
      const double sd = result.trials.size() > 1 ? std::sqrt(var / static_cast<double>(result.trials.size() - 1)) : 0.0;
      cumulative += first.rounds[t].uplink_scalars;
      w.row(t + 1, result.mean_mse[t], sd, first.rounds[t].uplink_scalars, first.rounds[t].downlink_scalars, cumulative);
    }
  }
  {
    CsvWriter w(path("fraction.csv"));
    auto& o = w.raw();
    o << "round,best_fraction";
    for (std::size_t p = 1; p <= P; ++p) o << ",kernel_" << p;
    o << '\n';
    const double n = static_cast<double>(result.trials.size());
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> frac(P, 0.0);
      for (const auto& tr : result.trials) frac[tr.rounds[t].selected] += 1.0 / n;
      o << t + 1 << ',';
      if (result.best_kernel) o << result.best_fraction[t];
      else o << "nan";
      for (double f : frac) o << ',' << f;
      o << '\n';
    }
  }
  if (cfg.verbose_trace) {
    CsvWriter w(path("node_detail.csv"));
    w.row("trial", "round", "node", "proposal", "kernel", "loss", "pmf");
    for (const auto& tr : result.trials)
      for (const auto& r : tr.rounds)
        for (std::size_t k = 0; k < r.detail.size(); ++k) {
          const auto& d = r.detail[k];
          for (std::size_t p = 0; p < d.losses.size(); ++p) {
            const KernelId kernel = d.losses.size() == 1 ? r.selected : p;
            const double q = d.pmf.empty() ? 1.0 : d.pmf[p];
            w.row(tr.trial + 1, r.round, k + 1, d.proposal + 1, kernel + 1, d.losses[p], q);
          }
        }
  }
  return files;
}

TrialTrace read_trial_trace(const std::string& dir, std::size_t trial, bool require_detail) {
  namespace fs = std::filesystem;
  const std::string want = std::to_string(trial + 1);
  TrialTrace out;
  out.trial = trial;

  const CsvTable trace = read_csv_table((fs::path(dir) / "trace.csv").string());
  const auto c_trial = trace.column("trial"), c_round = trace.column("round"),
             c_sel = trace.column("selected_kernel"), c_next = trace.column("next_kernel"),
             c_mse = trace.column("mse"), c_err = trace.column("round_sq_error"),
             c_norm = trace.column("model_norm_sq"), c_up = trace.column("uplink_scalars"),
             c_down = trace.column("downlink_scalars"), c_el = trace.column("eta_local"),
             c_eg = trace.column("eta_global");
  for (const auto& row : trace.rows) {
    if (row.at(c_trial) != want) continue;
    TraceRecord r;
    r.round = std::stoul(row.at(c_round));
    r.selected = std::stoul(row.at(c_sel)) - 1;
    r.next_index = std::stoul(row.at(c_next)) - 1;
    r.mse = to_double(row.at(c_mse));
    r.round_sq_error = to_double(row.at(c_err));
    r.model_norm_sq = to_double(row.at(c_norm));
    r.uplink_scalars = std::stoul(row.at(c_up));
    r.downlink_scalars = std::stoul(row.at(c_down));
    r.steps = {to_double(row.at(c_el)), to_double(row.at(c_eg))};
    if (r.round != out.rounds.size() + 1) throw IngestionError("trace.csv rounds are not contiguous");
    out.rounds.push_back(std::move(r));
  }
  if (out.rounds.empty()) throw IngestionError("trial " + want + " not found in " + dir + "/trace.csv");

  const CsvTable preds = read_csv_table((fs::path(dir) / "predictions.csv").string());
  const auto p_trial = preds.column("trial"), p_round = preds.column("round"), p_id = preds.column("sample_id"),
             p_label = preds.column("label"), p_pred = preds.column("prediction");
  for (const auto& row : preds.rows) {
    if (row.at(p_trial) != want) continue;
    auto& r = out.rounds.at(std::stoul(row.at(p_round)) - 1);
    r.sample_ids.push_back(std::stoul(row.at(p_id)));
    r.labels.push_back(to_double(row.at(p_label)));
    r.predictions.push_back(to_double(row.at(p_pred)));
  }

  const fs::path detail_path = fs::path(dir) / "node_detail.csv";
  if (!fs::exists(detail_path)) {
    if (require_detail) {
      throw IngestionError("trace in " + dir +
                           " has no per-kernel loss history (node_detail.csv); re-run with --verbose-trace");
    }
    return out;
  }
  const CsvTable detail = read_csv_table(detail_path.string());
  const auto d_trial = detail.column("trial"), d_round = detail.column("round"), d_node = detail.column("node"),
             d_prop = detail.column("proposal"), d_loss = detail.column("loss"), d_pmf = detail.column("pmf");
  for (const auto& row : detail.rows) {
    if (row.at(d_trial) != want) continue;
    auto& r = out.rounds.at(std::stoul(row.at(d_round)) - 1);
    const std::size_t node = std::stoul(row.at(d_node)) - 1;
    if (r.detail.size() <= node) r.detail.resize(node + 1);
    auto& d = r.detail[node];
    d.proposal = std::stoul(row.at(d_prop)) - 1;
    d.losses.push_back(to_double(row.at(d_loss)));
    d.pmf.push_back(to_double(row.at(d_pmf)));
  }
  return out;
}

}  // namespace mkofl
