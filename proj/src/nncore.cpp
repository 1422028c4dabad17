#include "hfedms/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hfedms/error.hpp"

namespace hfedms {

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  throw InvalidInput("unknown activation '" + name + "' (expected identity|relu)");
}

std::string to_string(Activation act) { return act == Activation::ReLU ? "relu" : "identity"; }

LinearLayer::LinearLayer(std::size_t in, std::size_t out)
    : in_dim(in), out_dim(out), weights(in * out, 0.0), bias(out, 0.0) {}

void LinearLayer::apply(std::span<const double> x, std::vector<double>& y) const {
  if (x.size() != in_dim) {
    throw InvalidInput("layer expects input of length " + std::to_string(in_dim) + ", got " +
                       std::to_string(x.size()));
  }
  y.assign(bias.begin(), bias.end());
  for (std::size_t i = 0; i < in_dim; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = weights.data() + i * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) y[j] += xi * row[j];
  }
}

void LinearLayer::validate() const {
  if (in_dim == 0 || out_dim == 0) throw InvalidInput("layer dimensions must be positive");
  if (weights.size() != in_dim * out_dim || bias.size() != out_dim) {
    throw InvalidInput("layer storage does not match declared dimensions");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(weights.begin(), weights.end(), finite) ||
      !std::all_of(bias.begin(), bias.end(), finite)) {
    throw InvalidInput("layer contains non-finite parameters");
  }
}

namespace {

void activate(Activation act, std::vector<double>& v) {
  if (act == Activation::ReLU) {
    for (double& x : v) x = std::max(0.0, x);
  }
}

}  // namespace

std::vector<double> FeatureExtractor::forward(std::span<const double> x) const {
  if (layers.empty()) throw InvalidInput("extractor has no layers");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].apply(cur, next);
    if (i + 1 < layers.size()) activate(activation, next);
    cur.swap(next);
  }
  return cur;
}

std::size_t FeatureExtractor::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

void DenseModel::validate() const {
  if (extractor.layers.empty()) throw InvalidInput("model requires at least one extractor layer");
  for (std::size_t i = 0; i < extractor.layers.size(); ++i) {
    extractor.layers[i].validate();
    if (i > 0 && extractor.layers[i - 1].out_dim != extractor.layers[i].in_dim) {
      throw InvalidInput("extractor layer " + std::to_string(i) + " input does not chain");
    }
  }
  classifier.validate();
  if (classifier.in_dim != extractor.output_dim()) {
    throw InvalidInput("classifier input does not match extractor output");
  }
}

DenseModel init_model(std::span<const std::size_t> extractor_dims, std::size_t num_classes,
                      Activation activation, std::uint64_t seed) {
  if (extractor_dims.size() < 2) {
    throw InvalidInput("extractor needs at least one layer (two dims)");
  }
  if (num_classes < 2) throw InvalidInput("need at least two classes");
  Rng rng = make_rng(seed, StreamTag::ModelInit);
  auto make_layer = [&rng](std::size_t in, std::size_t out) {
    LinearLayer layer(in, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer.weights) w = dist(rng);
    return layer;
  };
  DenseModel model;
  model.extractor.activation = activation;
  for (std::size_t i = 0; i + 1 < extractor_dims.size(); ++i) {
    model.extractor.layers.push_back(make_layer(extractor_dims[i], extractor_dims[i + 1]));
  }
  model.classifier = make_layer(extractor_dims.back(), num_classes);
  model.validate();
  return model;
}

DenseModel zeros_like(const DenseModel& model) {
  DenseModel z;
  z.extractor.activation = model.extractor.activation;
  for (const auto& l : model.extractor.layers) z.extractor.layers.emplace_back(l.in_dim, l.out_dim);
  z.classifier = LinearLayer(model.classifier.in_dim, model.classifier.out_dim);
  return z;
}

std::vector<double> forward_features(const DenseModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw InvalidInput("input has length " + std::to_string(x.size()) + ", model expects " +
                       std::to_string(model.input_dim()));
  }
  return model.extractor.forward(x);
}

std::vector<double> forward_logits(const DenseModel& model, std::span<const double> z) {
  if (z.size() != model.classifier.in_dim) {
    throw InvalidInput("feature has length " + std::to_string(z.size()) + ", classifier expects " +
                       std::to_string(model.classifier.in_dim));
  }
  std::vector<double> out;
  model.classifier.apply(z, out);
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

int predict(const DenseModel& model, std::span<const double> x) {
  const auto logits = forward_logits(model, forward_features(model, x));
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw InvalidInput("label " + std::to_string(label) + " out of range");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return std::log(sum) + mx - logits[static_cast<std::size_t>(label)];
}

double mean_loss(const DenseModel& model, std::span<const LabeledExample> examples) {
  if (examples.empty()) throw InvalidInput("mean_loss over empty set");
  double total = 0.0;
  for (const auto& ex : examples) {
    total += cross_entropy(forward_logits(model, forward_features(model, ex.features)), ex.label);
  }
  return total / static_cast<double>(examples.size());
}

// ---- parameter vectors -------------------------------------------------------

ParamLayout layout_of(const DenseModel& model) {
  ParamLayout layout;
  std::size_t offset = 0;
  auto add = [&](std::size_t layer, const LinearLayer& l) {
    layout.segments.push_back({layer, false, offset, l.weights.size()});
    offset += l.weights.size();
    layout.segments.push_back({layer, true, offset, l.bias.size()});
    offset += l.bias.size();
  };
  for (std::size_t i = 0; i < model.extractor.layers.size(); ++i) add(i, model.extractor.layers[i]);
  layout.classifier_offset = offset;
  add(model.extractor.layers.size(), model.classifier);
  layout.total = offset;
  return layout;
}

namespace {

template <typename Model, typename Fn>
void for_each_segment(Model& model, const ParamLayout& layout, Fn&& fn) {
  for (const auto& seg : layout.segments) {
    auto& layer = seg.layer < model.extractor.layers.size() ? model.extractor.layers[seg.layer]
                                                            : model.classifier;
    auto& storage = seg.is_bias ? layer.bias : layer.weights;
    fn(seg, storage);
  }
}

}  // namespace

ParamVector flatten(const DenseModel& model) {
  ParamVector pv;
  pv.layout = layout_of(model);
  pv.values.resize(pv.layout.total);
  for_each_segment(model, pv.layout, [&](const ParamSegment& seg, const std::vector<double>& s) {
    std::copy(s.begin(), s.end(), pv.values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
  });
  return pv;
}

void unflatten(const ParamVector& params, DenseModel& model) {
  if (!(layout_of(model) == params.layout) || params.values.size() != params.layout.total) {
    throw InvalidInput("parameter layout does not match model");
  }
  for_each_segment(model, params.layout, [&](const ParamSegment& seg, std::vector<double>& s) {
    auto first = params.values.begin() + static_cast<std::ptrdiff_t>(seg.offset);
    std::copy(first, first + static_cast<std::ptrdiff_t>(seg.length), s.begin());
  });
}

ParamVector average_params(std::span<const ParamVector> params) {
  if (params.empty()) throw InvalidInput("cannot average zero parameter vectors");
  ParamVector out;
  out.layout = params.front().layout;
  out.values.assign(out.layout.total, 0.0);
  for (const auto& p : params) {
    if (!(p.layout == out.layout) || p.values.size() != out.layout.total) {
      throw InvalidInput("parameter layouts differ");
    }
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += p.values[i];
  }
  const double n = static_cast<double>(params.size());
  for (double& v : out.values) v /= n;
  return out;
}

ParamCounts param_counts(const DenseModel& model) {
  model.validate();
  return {model.extractor.param_count() + model.classifier.param_count(),
          model.classifier.param_count()};
}

// ---- backprop ------------------------------------------------------------------

namespace {

struct Workspace {
  std::vector<std::vector<double>> acts;  // acts[0] = x, acts[i+1] = output of layer i
  std::vector<std::vector<double>> pre;   // pre-activation of layer i
  std::vector<double> logits;
  std::vector<double> dz;
  std::vector<double> da;
  std::vector<double> dpre;
};

// Accumulates the gradient of the loss at `z` into the classifier gradient and
// writes dL/dz into ws.dz. Returns the loss.
double classifier_backward(const LinearLayer& cls, std::span<const double> z, int label,
                           LinearLayer& grad, Workspace& ws, bool want_dz) {
  cls.apply(z, ws.logits);
  const double loss = cross_entropy(ws.logits, label);
  std::vector<double> p = softmax(ws.logits);
  p[static_cast<std::size_t>(label)] -= 1.0;
  for (std::size_t i = 0; i < cls.in_dim; ++i) {
    const double zi = z[i];
    double* grow = grad.weights.data() + i * cls.out_dim;
    for (std::size_t j = 0; j < cls.out_dim; ++j) grow[j] += zi * p[j];
  }
  for (std::size_t j = 0; j < cls.out_dim; ++j) grad.bias[j] += p[j];
  if (want_dz) {
    ws.dz.assign(cls.in_dim, 0.0);
    for (std::size_t i = 0; i < cls.in_dim; ++i) {
      const double* row = cls.weights.data() + i * cls.out_dim;
      double acc = 0.0;
      for (std::size_t j = 0; j < cls.out_dim; ++j) acc += row[j] * p[j];
      ws.dz[i] = acc;
    }
  }
  return loss;
}

double example_backward(const DenseModel& model, const LabeledExample& ex, DenseModel& grad,
                        bool freeze_extractor, Workspace& ws) {
  const auto& layers = model.extractor.layers;
  const std::size_t n = layers.size();
  if (ex.features.size() != model.input_dim()) {
    throw InvalidInput("example has " + std::to_string(ex.features.size()) +
                       " features, model expects " + std::to_string(model.input_dim()));
  }
  ws.acts.resize(n + 1);
  ws.pre.resize(n);
  ws.acts[0] = ex.features;
  for (std::size_t i = 0; i < n; ++i) {
    layers[i].apply(ws.acts[i], ws.pre[i]);
    ws.acts[i + 1] = ws.pre[i];
    if (i + 1 < n) activate(model.extractor.activation, ws.acts[i + 1]);
  }
  const double loss =
      classifier_backward(model.classifier, ws.acts[n], ex.label, grad.classifier, ws, !freeze_extractor);
  if (freeze_extractor) return loss;

  ws.da = ws.dz;
  for (std::size_t li = n; li-- > 0;) {
    const LinearLayer& layer = layers[li];
    LinearLayer& g = grad.extractor.layers[li];
    ws.dpre = ws.da;
    if (li + 1 < n && model.extractor.activation == Activation::ReLU) {
      for (std::size_t j = 0; j < layer.out_dim; ++j) {
        if (ws.pre[li][j] <= 0.0) ws.dpre[j] = 0.0;
      }
    }
    const auto& a = ws.acts[li];
    for (std::size_t i = 0; i < layer.in_dim; ++i) {
      const double ai = a[i];
      if (ai != 0.0) {
        double* grow = g.weights.data() + i * layer.out_dim;
        for (std::size_t j = 0; j < layer.out_dim; ++j) grow[j] += ai * ws.dpre[j];
      }
    }
    for (std::size_t j = 0; j < layer.out_dim; ++j) g.bias[j] += ws.dpre[j];
    if (li > 0) {
      ws.da.assign(layer.in_dim, 0.0);
      for (std::size_t i = 0; i < layer.in_dim; ++i) {
        const double* row = layer.weights.data() + i * layer.out_dim;
        double acc = 0.0;
        for (std::size_t j = 0; j < layer.out_dim; ++j) acc += row[j] * ws.dpre[j];
        ws.da[i] = acc;
      }
    }
  }
  return loss;
}

void sgd_update(LinearLayer& layer, LinearLayer& grad, double scale) {
  for (std::size_t i = 0; i < layer.weights.size(); ++i) {
    layer.weights[i] -= scale * grad.weights[i];
    grad.weights[i] = 0.0;
  }
  for (std::size_t j = 0; j < layer.bias.size(); ++j) {
    layer.bias[j] -= scale * grad.bias[j];
    grad.bias[j] = 0.0;
  }
}

void check_options(const TrainOptions& options) {
  if (!(options.lr >= 0.0) || !std::isfinite(options.lr)) {
    throw InvalidInput("learning rate must be finite and non-negative");
  }
  if (options.minibatch == 0) throw InvalidInput("minibatch size must be at least 1");
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

LossGradient loss_gradient(const DenseModel& model, std::span<const LabeledExample> examples,
                           bool freeze_extractor) {
  if (examples.empty()) throw InvalidInput("gradient over empty set");
  DenseModel grad = zeros_like(model);
  Workspace ws;
  double total = 0.0;
  for (const auto& ex : examples) total += example_backward(model, ex, grad, freeze_extractor, ws);
  LossGradient out;
  const double n = static_cast<double>(examples.size());
  out.loss = total / n;
  out.gradient = flatten(grad);
  for (double& g : out.gradient.values) g /= n;
  return out;
}

void train_one_epoch(DenseModel& model, std::span<const LabeledExample> batch,
                     const TrainOptions& options, Rng& rng) {
  if (batch.empty()) throw InvalidInput("cannot train on an empty batch");
  check_options(options);
  DenseModel grad = zeros_like(model);
  Workspace ws;
  const auto order = shuffled_indices(batch.size(), rng);
  for (std::size_t start = 0; start < order.size(); start += options.minibatch) {
    const std::size_t stop = std::min(order.size(), start + options.minibatch);
    double loss = 0.0;
    for (std::size_t k = start; k < stop; ++k) {
      loss += example_backward(model, batch[order[k]], grad, options.freeze_extractor, ws);
    }
    if (!std::isfinite(loss)) throw TrainingDiverged("non-finite loss during local training");
    const double scale = options.lr / static_cast<double>(stop - start);
    sgd_update(model.classifier, grad.classifier, scale);
    if (!options.freeze_extractor) {
      for (std::size_t i = 0; i < model.extractor.layers.size(); ++i) {
        sgd_update(model.extractor.layers[i], grad.extractor.layers[i], scale);
      }
    }
  }
}

void train_classifier_epoch(DenseModel& model, std::span<const std::vector<double>> features,
                            std::span<const int> labels, const TrainOptions& options, Rng& rng) {
  if (features.empty()) throw InvalidInput("cannot train on an empty calibration set");
  if (features.size() != labels.size()) throw InvalidInput("features and labels differ in length");
  check_options(options);
  LinearLayer grad(model.classifier.in_dim, model.classifier.out_dim);
  Workspace ws;
  const auto order = shuffled_indices(features.size(), rng);
  for (std::size_t start = 0; start < order.size(); start += options.minibatch) {
    const std::size_t stop = std::min(order.size(), start + options.minibatch);
    double loss = 0.0;
    for (std::size_t k = start; k < stop; ++k) {
      const auto& z = features[order[k]];
      if (z.size() != model.classifier.in_dim) throw InvalidInput("semantic feature has wrong length");
      loss += classifier_backward(model.classifier, z, labels[order[k]], grad, ws, false);
    }
    if (!std::isfinite(loss)) throw TrainingDiverged("non-finite loss during calibration");
    sgd_update(model.classifier, grad, options.lr / static_cast<double>(stop - start));
  }
}

}  // namespace hfedms
