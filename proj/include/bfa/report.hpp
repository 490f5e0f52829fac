#pragma once

// Trace CSV and run summary JSON.
//
// CSV: a "# bfa-trace v1 key=value ..." line, the column header, then one
// row per iteration. Row 0 is the clean model. Multiple committed bits in
// one iteration are joined with ';' in bit_address ("layer:weight:bit").
// Reals are written in shortest round-trip form; NaN as "nan".

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bfa/attack.hpp"

namespace bfa {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kTraceSchema = "bfa-trace v1";
inline constexpr const char* kSummarySchema = "bfa-summary v1";
inline constexpr const char* kTraceColumns =
    "iteration,n_flip,hamming,sample_loss,val_top1,val_top5,chosen_layer,bit_address";

std::string format_real(double v);

// Extra header fields are written after the built-in ones, in key order.
std::string trace_csv(const AttackTrace& trace, const std::map<std::string, std::string>& header = {});
void write_trace_csv(const AttackTrace& trace, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& header = {});

struct TraceRow {
  std::size_t iteration = 0;
  std::size_t n_flip = 0;
  std::size_t hamming = 0;
  double sample_loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::optional<std::size_t> chosen_layer;
  std::string bit_address;
};

struct TraceFile {
  std::map<std::string, std::string> header;
  std::vector<TraceRow> rows;
};

TraceFile parse_trace_csv(const std::string& text);
TraceFile read_trace_csv(const std::filesystem::path& path);

// n_flip of the first row with top-1 <= threshold.
std::optional<std::size_t> flips_to_threshold(const std::vector<TraceRow>& rows, double threshold);

// Median of the values; mean of the middle pair for even counts. NaN if empty.
double median(std::vector<double> values);

struct TrialSummary {
  std::uint64_t seed = 0;
  std::string csv;
  std::size_t n_flip = 0;
  std::size_t hamming = 0;
  double clean_top1 = 0.0;
  double final_top1 = 0.0;
  std::optional<std::size_t> flips_to_threshold;
  std::string stop;
};

TrialSummary summarize_trial(const TraceFile& trace, const std::string& csv_name, double threshold);

// Schema, config echo, seeds, per-trial rows and medians.
nlohmann::json summary_json(const nlohmann::json& config, const std::vector<TrialSummary>& trials, double threshold);
void write_json(const nlohmann::json& value, const std::filesystem::path& path);

}  // namespace bfa
