#include "bfa/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace bfa {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_real(const std::string& s, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ReportError("line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ReportError("line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

std::string addresses(const FlipRecord& r) {
  std::string out;
  for (const BitChange& c : r.flips) {
    if (!out.empty()) out += ';';
    out += to_string(c.address);
  }
  return out;
}

}  // namespace

std::string trace_csv(const AttackTrace& trace, const std::map<std::string, std::string>& header) {
  std::ostringstream out;
  out << "# " << kTraceSchema << " mode=" << trace.mode << " seed=" << trace.seed
      << " n_b=" << trace.bits_per_iteration << " classes=" << trace.num_classes << " stop=" << to_string(trace.stop);
  for (const auto& [k, v] : header) out << ' ' << k << '=' << v;
  out << '\n' << kTraceColumns << '\n';

  const bool top5 = trace.num_classes >= 10;
  auto t5 = [&](const ValidationMetrics& m) { return top5 ? format_real(m.top5) : std::string(); };
  out << "0,0,0," << format_real(trace.clean_sample_loss) << ',' << format_real(trace.clean.top1) << ','
      << t5(trace.clean) << ",,\n";
  for (const TraceStep& s : trace.steps) {
    out << s.record.iteration << ',' << s.n_flip << ',' << s.hamming << ',' << format_real(s.record.loss) << ','
        << format_real(s.validation.top1) << ',' << t5(s.validation) << ',' << s.record.layer << ','
        << addresses(s.record) << '\n';
  }
  return out.str();
}

void write_trace_csv(const AttackTrace& trace, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportError("cannot write " + path.string());
  out << trace_csv(trace, header);
  if (!out) throw ReportError("failed writing " + path.string());
}

TraceFile parse_trace_csv(const std::string& text) {
  TraceFile file;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  bool have_columns = false;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream fields(line.substr(1));
      std::string tok;
      while (fields >> tok) {
        const auto eq = tok.find('=');
        if (eq != std::string::npos) file.header[tok.substr(0, eq)] = tok.substr(eq + 1);
      }
      continue;
    }
    if (!have_columns) {
      if (line != kTraceColumns) throw ReportError("line " + std::to_string(n) + ": unexpected column header");
      have_columns = true;
      continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream cs(line);
    while (std::getline(cs, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 8) {
      throw ReportError("line " + std::to_string(n) + ": expected 8 fields, found " + std::to_string(cells.size()));
    }
    TraceRow row;
    row.iteration = parse_count(cells[0], n);
    row.n_flip = parse_count(cells[1], n);
    row.hamming = parse_count(cells[2], n);
    row.sample_loss = parse_real(cells[3], n);
    row.top1 = parse_real(cells[4], n);
    row.top5 = cells[5].empty() ? std::numeric_limits<double>::quiet_NaN() : parse_real(cells[5], n);
    if (!cells[6].empty()) row.chosen_layer = parse_count(cells[6], n);
    row.bit_address = cells[7];
    file.rows.push_back(std::move(row));
  }
  if (!have_columns) throw ReportError("no column header found");
  return file;
}

TraceFile read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_trace_csv(ss.str());
}

std::optional<std::size_t> flips_to_threshold(const std::vector<TraceRow>& rows, double threshold) {
  for (const TraceRow& r : rows) {
    if (r.top1 <= threshold) return r.n_flip;
  }
  return std::nullopt;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : (values[m - 1] + values[m]) / 2.0;
}

TrialSummary summarize_trial(const TraceFile& trace, const std::string& csv_name, double threshold) {
  if (trace.rows.empty()) throw ReportError(csv_name + ": trace has no rows");
  TrialSummary t;
  if (auto it = trace.header.find("seed"); it != trace.header.end()) t.seed = std::stoull(it->second);
  if (auto it = trace.header.find("stop"); it != trace.header.end()) t.stop = it->second;
  t.csv = csv_name;
  t.n_flip = trace.rows.back().n_flip;
  t.hamming = trace.rows.back().hamming;
  t.clean_top1 = trace.rows.front().top1;
  t.final_top1 = trace.rows.back().top1;
  t.flips_to_threshold = flips_to_threshold(trace.rows, threshold);
  return t;
}

nlohmann::json summary_json(const nlohmann::json& config, const std::vector<TrialSummary>& trials, double threshold) {
  nlohmann::json j;
  j["schema"] = kSummarySchema;
  j["config"] = config;
  j["threshold"] = threshold;
  j["seeds"] = nlohmann::json::array();
  j["trials"] = nlohmann::json::array();
  std::vector<double> flips, reached, finals, drops, hamming;
  for (const TrialSummary& t : trials) {
    j["seeds"].push_back(t.seed);
    nlohmann::json row = {{"seed", t.seed},           {"csv", t.csv},
                          {"n_flip", t.n_flip},       {"hamming", t.hamming},
                          {"clean_top1", t.clean_top1}, {"final_top1", t.final_top1},
                          {"stop", t.stop}};
    row["flips_to_threshold"] = t.flips_to_threshold ? nlohmann::json(*t.flips_to_threshold) : nlohmann::json();
    j["trials"].push_back(row);
    flips.push_back(static_cast<double>(t.n_flip));
    hamming.push_back(static_cast<double>(t.hamming));
    finals.push_back(t.final_top1);
    drops.push_back(t.clean_top1 - t.final_top1);
    if (t.flips_to_threshold) reached.push_back(static_cast<double>(*t.flips_to_threshold));
  }
  auto med = [](const std::vector<double>& v) { return v.empty() ? nlohmann::json() : nlohmann::json(median(v)); };
  j["median"] = {{"n_flip", med(flips)},
                 {"hamming", med(hamming)},
                 {"final_top1", med(finals)},
                 {"degradation", med(drops)},
                 {"flips_to_threshold", med(reached)}};
  j["trials_reaching_threshold"] = reached.size();
  return j;
}

void write_json(const nlohmann::json& value, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportError("cannot write " + path.string());
  out << value.dump(2) << '\n';
  if (!out) throw ReportError("failed writing " + path.string());
}

}  // namespace bfa
