#include "fmcb/dataset.h"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>
#include <utility>

#include "fmcb/error.h"
#include "fmcb/random.h"

namespace fmcb {
namespace {

std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
  auto b = std::find_if(s.begin(), s.end(), not_space);
  auto e = std::find_if(s.rbegin(), s.rend(), not_space).base();
  return b < e ? std::string_view(&*b, static_cast<std::size_t>(e - b)) : std::string_view();
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Reads one RFC-4180 record: quoted fields may contain the delimiter,
// doubled quotes and newlines. Returns false at end of input.
bool read_record(std::istream& in, char delim, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  int ch;
  while ((ch = in.get()) != EOF) {
    any = true;
    const char c = static_cast<char>(ch);
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == delim) {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      return true;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

bool blank(const std::vector<std::string>& fields) {
  return fields.size() == 1 && trim(fields[0]).empty();
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return in;
}

// Lexicographic label mapping; num_classes may add unseen trailing classes.
std::vector<std::string> class_mapping(const std::vector<std::string>& raw,
                                       std::optional<int> num_classes) {
  std::set<std::string> distinct(raw.begin(), raw.end());
  std::vector<std::string> names(distinct.begin(), distinct.end());
  if (num_classes) {
    if (static_cast<int>(names.size()) > *num_classes) {
      throw ParseError("found " + std::to_string(names.size()) + " distinct labels but " +
                       "num_classes is " + std::to_string(*num_classes));
    }
    for (int k = static_cast<int>(names.size()); k < *num_classes; ++k) {
      names.push_back("__class" + std::to_string(k));
    }
  }
  return names;
}

Dataset assemble(std::vector<double> values, std::size_t cols, const std::vector<std::string>& raw,
                 std::optional<int> num_classes, std::vector<std::string> feature_names) {
  if (raw.empty()) throw ParseError("empty dataset");
  auto names = class_mapping(raw, num_classes);
  std::vector<int> labels = map_labels(raw, names);
  Matrix features(raw.size(), cols, std::move(values));
  return Dataset(std::move(features), std::move(labels), std::move(names), std::move(feature_names));
}

}  // namespace

Dataset::Dataset(Matrix features, std::vector<int> labels, std::vector<std::string> class_names,
                 std::vector<std::string> feature_names)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)),
      feature_names_(std::move(feature_names)) {
  if (class_names_.size() < 2) {
    throw Error("dataset needs K >= 2 classes (K < 2: got " +
                std::to_string(class_names_.size()) + ")");
  }
  if (features_.rows() == 0) throw Error("empty dataset");
  if (features_.cols() == 0) throw Error("dataset has no feature columns");
  if (labels_.size() != features_.rows()) {
    throw DimensionError("label count " + std::to_string(labels_.size()) +
                         " does not match row count " + std::to_string(features_.rows()));
  }
  if (!feature_names_.empty() && feature_names_.size() != features_.cols()) {
    throw DimensionError("feature name count does not match feature count");
  }
  const int k = num_classes();
  for (int l : labels_) {
    if (l < 0 || l >= k) throw Error("label " + std::to_string(l) + " outside [0, K)");
  }
  for (double v : features_.data()) {
    if (!std::isfinite(v)) throw Error("non-finite feature value");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<int> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = labels_[rows[i]];
  return Dataset(features_.select_rows(rows), std::move(labels), class_names_, feature_names_);
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_names_.size(), 0);
  for (int l : labels_) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

ParsedDataset parse_csv_dataset(const std::string& path, const CsvOptions& options) {
  auto in = open_input(path);
  return parse_csv_dataset(in, options);
}

ParsedDataset parse_csv_dataset(std::istream& in, const CsvOptions& options) {
  std::vector<std::string> fields;
  std::vector<std::string> header;
  if (options.has_header) {
    while (read_record(in, options.delimiter, fields) && blank(fields)) {
    }
    header = fields;
  } else if (std::holds_alternative<std::string>(options.label_column)) {
    throw ParseError("label column given by name but the file has no header");
  }

  std::optional<std::size_t> label_index;
  std::size_t width = header.size();
  auto resolve_label = [&](std::size_t cols) {
    if (const auto* name = std::get_if<std::string>(&options.label_column)) {
      auto it = std::find(header.begin(), header.end(), *name);
      if (it == header.end()) throw ParseError("label column '" + *name + "' absent");
      return static_cast<std::size_t>(it - header.begin());
    }
    int idx = std::get<int>(options.label_column);
    if (idx < 0) idx += static_cast<int>(cols);
    if (idx < 0 || idx >= static_cast<int>(cols)) {
      throw ParseError("label column " + std::to_string(std::get<int>(options.label_column)) +
                       " absent (rows have " + std::to_string(cols) + " columns)");
    }
    return static_cast<std::size_t>(idx);
  };
  if (options.has_header) label_index = resolve_label(width);

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  std::size_t rejected = 0;
  while (read_record(in, options.delimiter, fields)) {
    if (blank(fields)) continue;
    if (!label_index) {
      width = fields.size();
      label_index = resolve_label(width);
    }
    if (fields.size() != width) {
      ++rejected;
      continue;
    }
    const std::size_t before = values.size();
    bool ok = true;
    for (std::size_t j = 0; j < fields.size() && ok; ++j) {
      if (j == *label_index) continue;
      auto v = parse_number(fields[j]);
      if (v) {
        values.push_back(*v);
      } else {
        ok = false;
      }
    }
    std::string_view label = trim(fields[*label_index]);
    if (!ok || label.empty()) {
      values.resize(before);
      ++rejected;
      continue;
    }
    raw_labels.emplace_back(label);
  }
  if (!label_index || width < 2) throw ParseError("empty dataset");

  std::vector<std::string> feature_names;
  if (options.has_header) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j != *label_index) feature_names.emplace_back(trim(header[j]));
    }
  }
  return ParsedDataset{assemble(std::move(values), width - 1, raw_labels, options.num_classes,
                                std::move(feature_names)),
                       rejected};
}

Matrix parse_csv_matrix(const std::string& path, char delimiter, bool has_header) {
  auto in = open_input(path);
  return parse_csv_matrix(in, delimiter, has_header);
}

Matrix parse_csv_matrix(std::istream& in, char delimiter, bool has_header) {
  std::vector<std::string> fields;
  if (has_header) {
    while (read_record(in, delimiter, fields) && blank(fields)) {
    }
  }
  std::vector<double> values;
  std::size_t width = 0;
  std::size_t rows = 0;
  while (read_record(in, delimiter, fields)) {
    if (blank(fields)) continue;
    if (rows == 0) {
      width = fields.size();
    } else if (fields.size() != width) {
      throw ParseError("row " + std::to_string(rows + 1) + " has " +
                       std::to_string(fields.size()) + " columns, expected " +
                       std::to_string(width) + " (non-rectangular input)");
    }
    for (const auto& f : fields) {
      auto v = parse_number(f);
      if (!v) throw ParseError("non-numeric cell '" + f + "' in row " + std::to_string(rows + 1));
      values.push_back(*v);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("empty matrix");
  return Matrix(rows, width, std::move(values));
}

Dataset parse_libsvm_dataset(const std::string& path, std::optional<int> num_features) {
  auto in = open_input(path);
  return parse_libsvm_dataset(in, num_features);
}

Dataset parse_libsvm_dataset(std::istream& in, std::optional<int> num_features) {
  struct Entry {
    std::size_t index;
    double value;
  };
  std::vector<std::vector<Entry>> rows;
  std::vector<std::string> raw_labels;
  std::size_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string label;
    if (!(tokens >> label)) continue;
    std::vector<Entry> entries;
    std::string tok;
    const std::string where = " on line " + std::to_string(line_no);
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError("expected idx:val, got '" + tok + "'" + where);
      std::size_t idx = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + colon, idx);
      if (ec != std::errc() || p != tok.data() + colon || idx == 0) {
        throw ParseError("bad feature index in '" + tok + "'" + where);
      }
      auto value = parse_number(std::string_view(tok).substr(colon + 1));
      if (!value) throw ParseError("bad feature value in '" + tok + "'" + where);
      if (!entries.empty() && idx <= entries.back().index) {
        throw ParseError("feature indices not strictly increasing" + where);
      }
      if (num_features && idx > static_cast<std::size_t>(*num_features)) {
        throw ParseError("feature index " + std::to_string(idx) + " exceeds num_features " +
                         std::to_string(*num_features) + where);
      }
      max_index = std::max(max_index, idx);
      entries.push_back({idx, *value});
    }
    rows.push_back(std::move(entries));
    raw_labels.push_back(label);
  }
  if (rows.empty()) throw ParseError("empty dataset");
  const std::size_t cols = num_features ? static_cast<std::size_t>(*num_features) : max_index;
  if (cols == 0) throw ParseError("dataset has no feature columns");
  std::vector<double> values(rows.size() * cols, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& e : rows[i]) values[i * cols + e.index - 1] = e.value;
  }
  return assemble(std::move(values), cols, raw_labels, std::nullopt, {});
}

void write_csv_dataset(const Dataset& ds, std::ostream& out, char delimiter) {
  auto quoted = [&](const std::string& s) {
    if (s.find_first_of(std::string{delimiter, '"', '\n', '\r'}) == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q.push_back('"');
      q.push_back(c);
    }
    q.push_back('"');
    return q;
  };
  const auto& names = ds.feature_names();
  for (std::size_t j = 0; j < ds.num_features(); ++j) {
    out << quoted(names.empty() ? "f" + std::to_string(j) : names[j]) << delimiter;
  }
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < ds.num_rows(); ++i) {
    for (double v : ds.features().row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << delimiter;
    }
    out << quoted(ds.class_names()[static_cast<std::size_t>(ds.labels()[i])]) << '\n';
  }
}

std::vector<int> map_labels(std::span<const std::string> labels,
                            std::span<const std::string> class_names) {
  std::map<std::string_view, int> index;
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    index.emplace(class_names[k], static_cast<int>(k));
  }
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = index.find(labels[i]);
    out[i] = it == index.end() ? -1 : it->second;
  }
  return out;
}

namespace {

std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> fractions) {
  std::vector<std::size_t> sizes(fractions.size());
  std::vector<double> remainder(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < fractions.size(); ++p) {
    const double exact = fractions[p] * static_cast<double>(n);
    sizes[p] = static_cast<std::size_t>(std::floor(exact));
    remainder[p] = exact - std::floor(exact);
    assigned += sizes[p];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), 0);
  // Stable: equal remainders keep train > validation > test priority.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % order.size()]];
  return sizes;
}

void check_fractions(std::span<const double> fractions) {
  double sum = 0.0;
  for (double x : fractions) {
    if (!(x > 0.0)) throw Error("split fractions must be positive");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
}

void validate(const SplitSpec& spec) {
  const double f[] = {spec.train_fraction, spec.validation_fraction, spec.test_fraction};
  check_fractions(f);
  if (spec.num_repeats < 1) throw Error("num_repeats must be >= 1");
}

}  // namespace

std::vector<std::size_t> split_sizes(std::size_t n, std::span<const double> fractions) {
  check_fractions(fractions);
  if (n < fractions.size()) {
    throw Error("insufficient rows: " + std::to_string(n) + " rows cannot fill " +
                std::to_string(fractions.size()) + " non-empty parts");
  }
  auto sizes = largest_remainder(n, fractions);
  for (auto& s : sizes) {
    if (s == 0) {
      auto donor = std::max_element(sizes.begin(), sizes.end());
      --*donor;
      s = 1;
    }
  }
  return sizes;
}

std::vector<SplitIndices> monte_carlo_split_indices(std::span<const int> labels, int num_classes,
                                                    const SplitSpec& spec) {
  validate(spec);
  const double fractions[] = {spec.train_fraction, spec.validation_fraction, spec.test_fraction};
  const std::size_t n = labels.size();
  const auto sizes = split_sizes(n, fractions);

  std::vector<std::vector<std::size_t>> by_class;
  if (spec.stratify) {
    by_class.resize(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }

  std::vector<SplitIndices> out;
  out.reserve(static_cast<std::size_t>(spec.num_repeats));
  for (int r = 0; r < spec.num_repeats; ++r) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(r)));
    SplitIndices parts;
    const std::array<std::vector<std::size_t>*, 3> dest{&parts.train, &parts.validation,
                                                        &parts.test};
    if (!spec.stratify) {
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(std::span(perm));
      std::size_t pos = 0;
      for (int p = 0; p < 3; ++p) {
        dest[p]->assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                        perm.begin() + static_cast<std::ptrdiff_t>(pos + sizes[p]));
        pos += sizes[p];
      }
    } else {
      for (auto rows : by_class) {
        rng.shuffle(std::span(rows));
        auto class_sizes = largest_remainder(rows.size(), fractions);
        std::size_t pos = 0;
        for (int p = 0; p < 3; ++p) {
          dest[p]->insert(dest[p]->end(), rows.begin() + static_cast<std::ptrdiff_t>(pos),
                          rows.begin() + static_cast<std::ptrdiff_t>(pos + class_sizes[p]));
          pos += class_sizes[p];
        }
      }
      for (int p = 0; p < 3; ++p) {
        if (dest[p]->empty()) throw Error("stratified split left a part empty");
      }
    }
    for (int p = 0; p < 3; ++p) std::sort(dest[p]->begin(), dest[p]->end());
    out.push_back(std::move(parts));
  }
  return out;
}

std::vector<SplitParts> monte_carlo_split(const Dataset& ds, const SplitSpec& spec) {
  std::vector<SplitParts> out;
  for (const auto& idx : monte_carlo_split_indices(ds.labels(), ds.num_classes(), spec)) {
    out.push_back({ds.subset(idx.train), ds.subset(idx.validation), ds.subset(idx.test)});
  }
  return out;
}

Dataset imbalance_subsample(const Dataset& ds, double min_keep_fraction, std::uint64_t seed) {
  if (!(min_keep_fraction > 0.0 && min_keep_fraction <= 1.0)) {
    throw Error("min_keep_fraction must be in (0, 1]");
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes()));
  for (std::size_t i = 0; i < ds.num_rows(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels()[i])].push_back(i);
  }
  Rng rng(seed);
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) throw Error("class '" + ds.class_names()[c] + "' has no rows");
    const double p = min_keep_fraction + (1.0 - min_keep_fraction) * rng.uniform();
    auto keep = static_cast<std::size_t>(std::ceil(p * static_cast<double>(rows.size())));
    keep = std::clamp<std::size_t>(keep, 1, rows.size());
    rng.shuffle(std::span(rows));
    kept.insert(kept.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(kept.begin(), kept.end());
  return ds.subset(kept);
}

}  // namespace fmcb
