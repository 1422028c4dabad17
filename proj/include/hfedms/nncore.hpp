#pragma once

// Dense network with an extractor/classifier split and manual backprop.
//
// Layers compute y = x * W + b with W stored row-major as in_dim x out_dim,
// so a stack of Identity-activated layers is x * (W1 W2 ... Wn) plus
// propagated bias terms.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hfedms/example.hpp"
#include "hfedms/rng.hpp"

namespace hfedms {

enum class Activation { Identity, ReLU };

Activation parse_activation(const std::string& name);
std::string to_string(Activation act);

struct LinearLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weights;  // in_dim * out_dim, row-major
  std::vector<double> bias;     // out_dim

  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out);

  double& w(std::size_t i, std::size_t j) { return weights[i * out_dim + j]; }
  double w(std::size_t i, std::size_t j) const { return weights[i * out_dim + j]; }

  std::size_t param_count() const { return in_dim * out_dim + out_dim; }

  // y = x * W + b; y is resized.
  void apply(std::span<const double> x, std::vector<double>& y) const;

  void validate() const;

  bool operator==(const LinearLayer&) const = default;
};

// Feature extractor h(x, phi). The activation is applied between layers,
// never after the last one, so z is always an affine image of the last
// hidden state.
struct FeatureExtractor {
  std::vector<LinearLayer> layers;
  Activation activation = Activation::Identity;

  std::vector<double> forward(std::span<const double> x) const;
  std::size_t input_dim() const { return layers.front().in_dim; }
  std::size_t output_dim() const { return layers.back().out_dim; }
  std::size_t param_count() const;

  bool operator==(const FeatureExtractor&) const = default;
};

struct DenseModel {
  FeatureExtractor extractor;
  LinearLayer classifier;

  // Throws InvalidInput when the layer chain is broken, the extractor is
  // empty, or any parameter is non-finite.
  void validate() const;

  std::size_t input_dim() const { return extractor.input_dim(); }
  std::size_t feature_dim() const { return extractor.output_dim(); }
  std::size_t num_classes() const { return classifier.out_dim; }

  bool operator==(const DenseModel&) const = default;
};

// Builds a model whose extractor maps dims[0] -> dims[1] -> ... -> dims.back()
// followed by a dims.back() x num_classes classifier. Weights are uniform in
// [-1/sqrt(in), 1/sqrt(in)], biases zero.
DenseModel init_model(std::span<const std::size_t> extractor_dims, std::size_t num_classes,
                      Activation activation, std::uint64_t seed);

// Zero-initialised model with the same shape.
DenseModel zeros_like(const DenseModel& model);

std::vector<double> forward_features(const DenseModel& model, std::span<const double> x);
std::vector<double> forward_logits(const DenseModel& model, std::span<const double> z);
std::vector<double> softmax(std::span<const double> logits);
int predict(const DenseModel& model, std::span<const double> x);

// Natural-log softmax cross-entropy for a single example.
double cross_entropy(std::span<const double> logits, int label);
double mean_loss(const DenseModel& model, std::span<const LabeledExample> examples);

// ---- flat parameter vectors ------------------------------------------------

struct ParamSegment {
  std::size_t layer = 0;  // extractor index; extractor.size() means classifier
  bool is_bias = false;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const ParamSegment&) const = default;
};

// Extractor layers in order (weights, bias), then the classifier. The
// classifier therefore always occupies the tail of the vector.
struct ParamLayout {
  std::vector<ParamSegment> segments;
  std::size_t total = 0;
  std::size_t classifier_offset = 0;

  bool operator==(const ParamLayout&) const = default;
};

struct ParamVector {
  std::vector<double> values;
  ParamLayout layout;

  std::span<const double> extractor_part() const {
    return std::span(values).first(layout.classifier_offset);
  }
  std::span<const double> classifier_part() const {
    return std::span(values).subspan(layout.classifier_offset);
  }
};

ParamLayout layout_of(const DenseModel& model);
ParamVector flatten(const DenseModel& model);
void unflatten(const ParamVector& params, DenseModel& model);

// Element-wise arithmetic mean; all inputs must share one layout.
ParamVector average_params(std::span<const ParamVector> params);

struct ParamCounts {
  std::size_t total = 0;
  std::size_t classifier = 0;
  std::size_t extractor() const { return total - classifier; }
};

ParamCounts param_counts(const DenseModel& model);

// ---- training ----------------------------------------------------------------

struct TrainOptions {
  double lr = 0.01;
  std::size_t minibatch = 5;
  bool freeze_extractor = false;
};

struct LossGradient {
  double loss = 0.0;  // mean over the examples
  ParamVector gradient;
};

// Mean softmax cross-entropy and its exact gradient. With freeze_extractor the
// extractor part of the gradient is zero.
LossGradient loss_gradient(const DenseModel& model, std::span<const LabeledExample> examples,
                           bool freeze_extractor = false);

// One pass over `batch` in rng-shuffled minibatches with plain SGD.
// Throws TrainingDiverged on a non-finite loss.
void train_one_epoch(DenseModel& model, std::span<const LabeledExample> batch,
                     const TrainOptions& options, Rng& rng);

// Classifier-only epoch over precomputed semantic features.
void train_classifier_epoch(DenseModel& model, std::span<const std::vector<double>> features,
                            std::span<const int> labels, const TrainOptions& options, Rng& rng);

}  // namespace hfedms
