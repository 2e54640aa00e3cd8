#include "recalnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "recalnet/error.hpp"
#include "recalnet/rng.hpp"

namespace recalnet {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r')
    cells.back().pop_back();
  return cells;
}

double parse_double(const std::string& cell, const std::string& path,
                    std::size_t line_no) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw ParseError(msg(path, ":", line_no, ": non-numeric cell '", cell, "'"));
  return value;
}

long parse_int(const std::string& cell, const std::string& path,
               std::size_t line_no) {
  long value = 0;
  auto [ptr, ec] =
      std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw ParseError(msg(path, ":", line_no, ": non-integer cell '", cell, "'"));
  return value;
}

struct RawVisit {
  long visit_index;
  Vector values;  // NaN = missing
};

}  // namespace

Dataset load_csv(const std::string& records_path,
                 const std::string& labels_path) {
  std::ifstream rec(records_path);
  if (!rec) throw Error(msg("load_csv: cannot open ", records_path));

  std::string line;
  if (!std::getline(rec, line))
    throw ParseError(msg(records_path, ":1: empty file"));
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "patient_id" ||
      header[1] != "visit_index")
    throw ParseError(msg(records_path,
                         ":1: header must be patient_id,visit_index,<features>"));

  Dataset ds;
  ds.feature_names.assign(header.begin() + 2, header.end());
  const std::size_t n_r = ds.feature_names.size();

  std::vector<std::string> patient_order;
  std::map<std::string, std::size_t> patient_slot;
  std::vector<std::vector<RawVisit>> raw;

  std::size_t line_no = 1;
  while (std::getline(rec, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != n_r + 2)
      throw ParseError(msg(records_path, ":", line_no, ": expected ",
                           n_r + 2, " cells, got ", cells.size()));
    const std::string& pid = cells[0];
    long visit = parse_int(cells[1], records_path, line_no);
    auto [it, inserted] = patient_slot.try_emplace(pid, patient_order.size());
    if (inserted) {
      patient_order.push_back(pid);
      raw.emplace_back();
    }
    auto& visits = raw[it->second];
    for (const auto& v : visits)
      if (v.visit_index == visit)
        throw ParseError(msg(records_path, ":", line_no, ": duplicate (",
                             pid, ", ", visit, ")"));
    RawVisit rv;
    rv.visit_index = visit;
    rv.values.resize(n_r);
    for (std::size_t j = 0; j < n_r; ++j)
      rv.values[j] = cells[j + 2].empty()
                         ? std::numeric_limits<double>::quiet_NaN()
                         : parse_double(cells[j + 2], records_path, line_no);
    visits.push_back(std::move(rv));
  }

  // Labels keyed by (patient, visit_index).
  std::ifstream lab(labels_path);
  if (!lab) throw Error(msg("load_csv: cannot open ", labels_path));
  if (!std::getline(lab, line))
    throw ParseError(msg(labels_path, ":1: empty file"));
  std::vector<std::string> lab_header = split_csv_line(line);
  if (lab_header != std::vector<std::string>{"patient_id", "visit_index", "label"})
    throw ParseError(msg(labels_path,
                         ":1: header must be patient_id,visit_index,label"));

  std::map<std::pair<std::string, long>, double> labels;
  std::size_t lab_line = 1;
  while (std::getline(lab, line)) {
    ++lab_line;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != 3)
      throw ParseError(msg(labels_path, ":", lab_line, ": expected 3 cells"));
    const std::string& pid = cells[0];
    if (!patient_slot.count(pid))
      throw ParseError(msg(labels_path, ":", lab_line, ": unknown patient '",
                           pid, "'"));
    long visit = parse_int(cells[1], labels_path, lab_line);
    long label = parse_int(cells[2], labels_path, lab_line);
    if (label != 0 && label != 1)
      throw ParseError(msg(labels_path, ":", lab_line, ": label must be 0 or 1"));
    auto key = std::make_pair(pid, visit);
    if (labels.count(key))
      throw ParseError(msg(labels_path, ":", lab_line, ": duplicate (", pid,
                           ", ", visit, ")"));
    const auto& visits = raw[patient_slot[pid]];
    bool known = std::any_of(visits.begin(), visits.end(), [&](const RawVisit& v) {
      return v.visit_index == visit;
    });
    if (!known)
      throw ParseError(msg(labels_path, ":", lab_line, ": patient '", pid,
                           "' has no visit ", visit));
    labels[key] = static_cast<double>(label);
  }

  for (std::size_t p = 0; p < patient_order.size(); ++p) {
    auto& visits = raw[p];
    std::sort(visits.begin(), visits.end(),
              [](const RawVisit& a, const RawVisit& b) {
                return a.visit_index < b.visit_index;
              });
    PatientSequence seq;
    seq.id = patient_order[p];
    seq.visits = Matrix(visits.size(), n_r);
    seq.labels.assign(visits.size(), 0.0);
    seq.mask.assign(visits.size(), 0.0);
    for (std::size_t t = 0; t < visits.size(); ++t) {
      for (std::size_t j = 0; j < n_r; ++j) seq.visits(t, j) = visits[t].values[j];
      auto it = labels.find({seq.id, visits[t].visit_index});
      if (it != labels.end()) {
        seq.labels[t] = it->second;
        seq.mask[t] = 1.0;
      }
    }
    ds.patients.push_back(std::move(seq));
  }
  return ds;
}

void apply_groups_csv(Dataset& ds, const std::string& groups_path) {
  std::ifstream in(groups_path);
  if (!in) throw Error(msg("apply_groups_csv: cannot open ", groups_path));
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(msg(groups_path, ":1: empty file"));
  if (split_csv_line(line) != std::vector<std::string>{"patient_id", "group"})
    throw ParseError(msg(groups_path, ":1: header must be patient_id,group"));
  std::map<std::string, std::size_t> slot;
  for (std::size_t p = 0; p < ds.patients.size(); ++p)
    slot[ds.patients[p].id] = p;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != 2)
      throw ParseError(msg(groups_path, ":", line_no, ": expected 2 cells"));
    auto it = slot.find(cells[0]);
    if (it == slot.end())
      throw ParseError(msg(groups_path, ":", line_no, ": unknown patient '",
                           cells[0], "'"));
    ds.patients[it->second].group = cells[1];
  }
}

Dataset impute(const Dataset& ds) {
  Dataset out = ds;
  for (auto& seq : out.patients) {
    const std::size_t t_len = seq.length();
    for (std::size_t j = 0; j < ds.n_features(); ++j) {
      std::size_t first_seen = t_len;
      for (std::size_t t = 0; t < t_len; ++t)
        if (!std::isnan(seq.visits(t, j))) {
          first_seen = t;
          break;
        }
      if (first_seen == t_len)
        throw Error(msg("impute: feature '", ds.feature_names[j],
                        "' never observed for patient ", seq.id));
      // Leading gap takes the first observation; afterwards carry forward.
      for (std::size_t t = 0; t < first_seen; ++t)
        seq.visits(t, j) = seq.visits(first_seen, j);
      for (std::size_t t = first_seen + 1; t < t_len; ++t)
        if (std::isnan(seq.visits(t, j)))
          seq.visits(t, j) = seq.visits(t - 1, j);
    }
  }
  return out;
}

namespace {

std::vector<std::size_t> largest_remainder_counts(std::size_t n,
                                                  const Vector& fractions) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.push_back({exact - std::floor(exact), i});
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned)
    counts[remainders[k % remainders.size()].second] += 1;
  return counts;
}

}  // namespace

Splits prepare(const Dataset& ds, int max_len, const SplitFractions& fractions,
               std::uint64_t seed) {
  const double total = fractions.train + fractions.valid + fractions.test;
  if (std::abs(total - 1.0) > 1e-9)
    throw InvariantError(msg("prepare: split fractions sum to ", total));
  if (max_len < 1) throw InvariantError(msg("prepare: max_len=", max_len));
  for (const auto& seq : ds.patients)
    for (double x : seq.visits.storage())
      if (std::isnan(x))
        throw InvariantError(msg("prepare: patient ", seq.id,
                                 " still has missing values; impute first"));

  Dataset truncated = ds;
  for (auto& seq : truncated.patients) {
    if (seq.length() <= static_cast<std::size_t>(max_len)) continue;
    const std::size_t keep = static_cast<std::size_t>(max_len);
    Matrix v(keep, seq.visits.cols());
    for (std::size_t t = 0; t < keep; ++t)
      for (std::size_t j = 0; j < seq.visits.cols(); ++j)
        v(t, j) = seq.visits(t, j);
    seq.visits = std::move(v);
    seq.labels.resize(keep);
    seq.mask.resize(keep);
  }

  std::vector<std::size_t> order(truncated.patients.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }

  std::vector<std::size_t> counts = largest_remainder_counts(
      order.size(), {fractions.train, fractions.valid, fractions.test});
  const char* names[3] = {"train", "valid", "test"};
  for (int s = 0; s < 3; ++s)
    if (counts[s] == 0)
      throw Error(msg("prepare: ", names[s], " split receives zero patients"));

  Splits splits;
  Dataset* parts[3] = {&splits.train, &splits.valid, &splits.test};
  std::size_t pos = 0;
  for (int s = 0; s < 3; ++s) {
    parts[s]->feature_names = truncated.feature_names;
    for (std::size_t k = 0; k < counts[s]; ++k)
      parts[s]->patients.push_back(truncated.patients[order[pos++]]);
  }

  // z-score statistics from the train split only.
  const std::size_t n_r = truncated.n_features();
  Vector mean(n_r, 0.0), sq(n_r, 0.0);
  std::size_t n_obs = 0;
  for (const auto& seq : splits.train.patients) {
    for (std::size_t t = 0; t < seq.length(); ++t)
      for (std::size_t j = 0; j < n_r; ++j) mean[j] += seq.visits(t, j);
    n_obs += seq.length();
  }
  for (std::size_t j = 0; j < n_r; ++j) mean[j] /= static_cast<double>(n_obs);
  for (const auto& seq : splits.train.patients)
    for (std::size_t t = 0; t < seq.length(); ++t)
      for (std::size_t j = 0; j < n_r; ++j) {
        double d = seq.visits(t, j) - mean[j];
        sq[j] += d * d;
      }
  Vector std_dev(n_r);
  for (std::size_t j = 0; j < n_r; ++j) {
    std_dev[j] = std::sqrt(sq[j] / static_cast<double>(n_obs));
    if (!(std_dev[j] > 1e-12))
      throw Error(msg("prepare: feature '", truncated.feature_names[j],
                      "' is constant on the train split"));
  }

  for (int s = 0; s < 3; ++s) {
    parts[s]->norm_mean = mean;
    parts[s]->norm_std = std_dev;
    for (auto& seq : parts[s]->patients)
      for (std::size_t t = 0; t < seq.length(); ++t)
        for (std::size_t j = 0; j < n_r; ++j)
          seq.visits(t, j) = (seq.visits(t, j) - mean[j]) / std_dev[j];
  }
  return splits;
}

std::vector<std::vector<std::size_t>> bootstrap_resample(
    std::size_t n_patients, std::size_t n, std::uint64_t seed) {
  if (n_patients == 0)
    throw InvariantError("bootstrap_resample: empty test set");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> resamples(n);
  for (auto& sample : resamples) {
    sample.resize(n_patients);
    for (auto& idx : sample)
      idx = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int64_t>(n_patients) - 1));
  }
  return resamples;
}

namespace {
void open_or_throw(std::ofstream& os, const std::string& path) {
  os.open(path, std::ios::binary);
  if (!os) throw Error(msg("cannot open ", path, " for writing"));
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void write_records_csv(const Dataset& ds, const std::string& path) {
  std::ofstream os;
  open_or_throw(os, path);
  os << "patient_id,visit_index";
  for (const auto& name : ds.feature_names) os << "," << name;
  os << "\n";
  for (const auto& seq : ds.patients)
    for (std::size_t t = 0; t < seq.length(); ++t) {
      os << seq.id << "," << t;
      for (std::size_t j = 0; j < ds.n_features(); ++j) {
        double v = seq.visits(t, j);
        os << ",";
        if (!std::isnan(v)) os << fmt_double(v);
      }
      os << "\n";
    }
  if (!os) throw Error(msg("write failed for ", path));
}

void write_labels_csv(const Dataset& ds, const std::string& path) {
  std::ofstream os;
  open_or_throw(os, path);
  os << "patient_id,visit_index,label\n";
  for (const auto& seq : ds.patients)
    for (std::size_t t = 0; t < seq.length(); ++t) {
      if (seq.mask[t] == 0.0) continue;
      os << seq.id << "," << t << "," << (seq.labels[t] != 0.0 ? 1 : 0) << "\n";
    }
  if (!os) throw Error(msg("write failed for ", path));
}

void write_groups_csv(const Dataset& ds, const std::string& path) {
  std::ofstream os;
  open_or_throw(os, path);
  os << "patient_id,group\n";
  for (const auto& seq : ds.patients)
    if (!seq.group.empty()) os << seq.id << "," << seq.group << "\n";
  if (!os) throw Error(msg("write failed for ", path));
}

}  // namespace recalnet
