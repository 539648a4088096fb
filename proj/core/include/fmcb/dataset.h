#ifndef FMCB_DATASET_H_
#define FMCB_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fmcb/matrix.h"

namespace fmcb {

// Dense features plus dense class indices in [0, K). class_names[k] is the
// original label string that index k was mapped from; predictions are
// reported through it. Immutable after construction.
class Dataset {
 public:
  Dataset(Matrix features, std::vector<int> labels, std::vector<std::string> class_names,
          std::vector<std::string> feature_names = {});

  const Matrix& features() const { return features_; }
  std::span<const int> labels() const { return labels_; }
  int num_classes() const { return static_cast<int>(class_names_.size()); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  std::size_t num_rows() const { return features_.rows(); }
  std::size_t num_features() const { return features_.cols(); }

  // Rows in the given order; label mapping and K are preserved.
  Dataset subset(std::span<const std::size_t> rows) const;

  // Per-class row counts, length K.
  std::vector<std::size_t> class_counts() const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::vector<std::string> class_names_;
  std::vector<std::string> feature_names_;
};

struct CsvOptions {
  char delimiter = ',';
  bool has_header = false;
  // Column name (requires has_header) or zero-based index; negative indices
  // count from the end, so the default selects the last column.
  std::variant<std::string, int> label_column = -1;
  std::optional<int> num_classes;
};

struct ParsedDataset {
  Dataset dataset;
  // Rows dropped because a feature cell was not a finite number.
  std::size_t rejected_rows = 0;
};

// Labels are mapped to [0, K) in lexicographic order of their strings.
ParsedDataset parse_csv_dataset(const std::string& path, const CsvOptions& options);
ParsedDataset parse_csv_dataset(std::istream& in, const CsvOptions& options);

// Numeric CSV without a label column (prediction inputs, factorize inputs).
// Every row must have the same width.
Matrix parse_csv_matrix(const std::string& path, char delimiter = ',', bool has_header = false);
Matrix parse_csv_matrix(std::istream& in, char delimiter = ',', bool has_header = false);

// "label idx:val ..." with 1-based, strictly increasing indices. Absent
// entries are 0. D is the largest index seen unless num_features is given.
Dataset parse_libsvm_dataset(const std::string& path, std::optional<int> num_features = {});
Dataset parse_libsvm_dataset(std::istream& in, std::optional<int> num_features = {});

// Header row, then features followed by the original label, 17 significant
// digits per value so a re-parse is bit-exact.
void write_csv_dataset(const Dataset& ds, std::ostream& out, char delimiter = ',');

// Maps string labels to indices under an existing class mapping (e.g. the
// one stored in a model). Labels missing from the mapping become -1.
std::vector<int> map_labels(std::span<const std::string> labels,
                            std::span<const std::string> class_names);

// Fraction of rows assigned to each part of one Monte Carlo repeat.
struct SplitSpec {
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  double test_fraction = 0.2;
  int num_repeats = 5;
  std::uint64_t seed = 0;
  // Allocate each part class by class. Off by default.
  bool stratify = false;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct SplitParts {
  Dataset train;
  Dataset validation;
  Dataset test;
};

// Part sizes for n rows: largest-remainder rounding (ties go to train, then
// validation, then test), then every empty part takes one row from the
// largest part.
std::vector<std::size_t> split_sizes(std::size_t n, std::span<const double> fractions);

std::vector<SplitIndices> monte_carlo_split_indices(std::span<const int> labels, int num_classes,
                                                    const SplitSpec& spec);
std::vector<SplitParts> monte_carlo_split(const Dataset& ds, const SplitSpec& spec);

// For each class c draws p_c ~ U[min_keep_fraction, 1] and keeps
// ceil(p_c * n_c) of its rows, chosen at random; row order is preserved.
Dataset imbalance_subsample(const Dataset& ds, double min_keep_fraction, std::uint64_t seed);

}  // namespace fmcb

#endif  // FMCB_DATASET_H_
