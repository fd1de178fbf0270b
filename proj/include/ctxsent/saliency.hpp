#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ctxsent/datamodel.hpp"

namespace ctxsent {

/// Dense row-major square matrix.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t row, std::size_t col) { return data_[row * n_ + col]; }
  double operator()(std::size_t row, std::size_t col) const { return data_[row * n_ + col]; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Heads x T x T tensor, row-major per head.
class HeadTensor {
 public:
  HeadTensor() = default;
  HeadTensor(std::size_t heads, std::size_t tokens) : heads_(heads), tokens_(tokens), data_(heads * tokens * tokens) {}

  std::size_t heads() const noexcept { return heads_; }
  std::size_t tokens() const noexcept { return tokens_; }
  double& operator()(std::size_t h, std::size_t row, std::size_t col) {
    return data_[(h * tokens_ + row) * tokens_ + col];
  }
  double operator()(std::size_t h, std::size_t row, std::size_t col) const {
    return data_[(h * tokens_ + row) * tokens_ + col];
  }

  /// Parses a nested [H][T][T] array.
  static HeadTensor from_json(const Json& j);

 private:
  std::size_t heads_ = 0;
  std::size_t tokens_ = 0;
  std::vector<double> data_;
};

struct SaliencyLayer {
  HeadTensor attention;
  HeadTensor grad;
};

/// Exported attention maps and loss gradients for one prediction.
/// Entry (k, j) of a map is the flow from token j to token k.
struct SaliencyDump {
  std::vector<SaliencyLayer> layers;
  std::vector<std::size_t> context_span;
  /// Image and sentence token positions.
  std::vector<std::size_t> input_span;
  std::size_t prediction_position = 0;
  std::string model_id;
  std::string sample_id;
};

/// Throws ValidationError on shape mismatches, out-of-range or overlapping
/// spans, and empty spans.
void validate(const SaliencyDump& dump);

/// {model_id, sample_id, layers:[{attention, grad}], context_span:[...],
///  input_span:[...], prediction_position}
SaliencyDump load_saliency_dump(const std::filesystem::path& path);
SaliencyDump saliency_dump_from_json(const Json& j);

/// Sum over heads of |A ⊙ dL/dA| (elementwise).
Matrix saliency_matrix(const HeadTensor& attention, const HeadTensor& grad);

struct SaliencyScores {
  std::vector<double> context_to_prediction;
  std::vector<double> input_to_prediction;
};

/// Per layer: mean of I(p, j) over the context span and over the input span.
SaliencyScores s_scores(const SaliencyDump& dump);

/// layer,S_c_to_p,S_i_to_p
std::string to_csv(const SaliencyScores& scores);
Json to_json(const SaliencyScores& scores);

}  // namespace ctxsent
