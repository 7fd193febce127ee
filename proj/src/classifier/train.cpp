#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "backmix/classifier.hpp"
#include "backmix/rng.hpp"

namespace backmix {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("train: batch size must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (seeds.empty()) throw ConfigError("train: at least one seed is required");
}

Adam::Adam(std::vector<nn::Param*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto step_size = static_cast<float>(lr_ / c1);
  const auto inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(c2));
  const auto b1 = static_cast<float>(beta1_);
  const auto b2 = static_cast<float>(beta2_);
  const auto eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& value = params_[i]->value;
    const auto& grad = params_[i]->grad;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const float g = grad[j];
      m[j] = b1 * m[j] + (1.0f - b1) * g;
      v[j] = b2 * v[j] + (1.0f - b2) * g * g;
      value[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_c2 + eps);
    }
  }
}

int select_best_epoch(std::span<const double> val_accuracy) {
  if (val_accuracy.empty()) throw std::invalid_argument("select_best_epoch: empty history");
  // max_element returns the first maximum
  return static_cast<int>(std::max_element(val_accuracy.begin(), val_accuracy.end()) - val_accuracy.begin()) + 1;
}

std::vector<Image> images_of(const std::vector<Frame>& frames) {
  std::vector<Image> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.image);
  return out;
}

std::vector<double> softmax_rows(std::span<const double> logits, int num_classes) {
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r * k < logits.size(); ++r) {
    const auto row = logits.subspan(r * k, k);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += (out[r * k + c] = std::exp(row[c] - m));
    for (std::size_t c = 0; c < k; ++c) out[r * k + c] /= s;
  }
  return out;
}

std::vector<double> Prediction::probabilities() const { return softmax_rows(logits, num_classes); }

Prediction predict(const ResNet& model, std::span<const Image> images, int batch_size) {
  Prediction p;
  p.num_classes = model.num_classes();
  const int res = model.input_resolution();
  const auto k = static_cast<std::size_t>(p.num_classes);
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const Image*> batch;
    for (std::size_t i = start; i < end; ++i) {
      if (!images[i].same_shape(res, res))
        throw ShapeError("predict: image " + std::to_string(i) + " is " + std::to_string(images[i].height()) + "x" +
                         std::to_string(images[i].width()) + ", model expects " + std::to_string(res));
      batch.push_back(&images[i]);
    }
    const auto logits = model.logits(to_batch(std::span<const Image* const>(batch)));
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto row = std::span<const double>(logits).subspan(r * k, k);
      p.labels.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
    p.logits.insert(p.logits.end(), logits.begin(), logits.end());
  }
  return p;
}

namespace {

double accuracy_on(const ResNet& model, const std::vector<Frame>& frames) {
  if (frames.empty()) return 0.0;
  const auto images = images_of(frames);
  const auto pred = predict(model, images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) correct += pred.labels[i] == frames[i].label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(frames.size());
}

std::vector<std::vector<float>> snapshot(const ResNet& model) {
  std::vector<std::vector<float>> s;
  for (const auto* v : model.state()) s.push_back(*v);
  return s;
}

void restore(ResNet& model, const std::vector<std::vector<float>>& s) {
  auto dst = model.state();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = s[i];
}

}  // namespace

TrainResult train(ResNet model, const AugmentationPlan& plan, const WeightingConfig& weighting,
                  const TrainConfig& config, std::uint64_t seed, const std::vector<Frame>& train_frames,
                  const std::vector<Frame>& val_frames, const EpochCallback& on_epoch) {
  config.validate();
  weighting.validate();
  if (train_frames.size() < 2) throw ConfigError("train: need at least 2 training frames");
  for (const auto& f : train_frames)
    if (f.label < 0 || f.label >= model.num_classes()) throw ConfigError("train: label out of range");

  const double w_aug = example_weight(true, weighting);
  const double w_plain = example_weight(false, weighting);
  Adam optimizer(model.parameters(), config.learning_rate);
  const int k = model.num_classes();

  std::vector<EpochRecord> history;
  std::vector<double> val_acc;
  std::vector<std::vector<float>> best_state;
  int best_epoch = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto examples = apply_epoch(plan, train_frames, static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_rng(seed, {stream::kShuffle, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      if (end - start < 2) break;  // batch statistics need two samples
      std::vector<const Image*> images;
      std::vector<int> labels;
      std::vector<double> weights;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[order[i]];
        images.push_back(&ex.image);
        labels.push_back(ex.label);
        weights.push_back(ex.is_backmixed ? w_aug : w_plain);
      }
      model.zero_grad();
      const auto logits = model.forward_train(to_batch(std::span<const Image* const>(images)));
      const auto loss = weighted_cross_entropy(logits, k, labels, weights);
      if (!std::isfinite(loss.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index << " (lr "
            << optimizer.learning_rate() << ")";
        throw TrainingError(msg.str());
      }
      model.backward(loss.grad);
      optimizer.step();
      loss_sum += loss.loss * static_cast<double>(end - start);
      seen += end - start;
      ++batch_index;
    }

    EpochRecord rec{epoch, seen ? loss_sum / static_cast<double>(seen) : 0.0, accuracy_on(model, val_frames)};
    history.push_back(rec);
    val_acc.push_back(rec.val_accuracy);
    if (best_state.empty() || rec.val_accuracy > val_acc[static_cast<std::size_t>(best_epoch - 1)]) {
      best_state = snapshot(model);
      best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
  }
  restore(model, best_state);
  return {std::move(model), std::move(history), best_epoch};
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,val_acc\n";
  out.precision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_accuracy << '\n';
}

namespace {

constexpr char kMagic[8] = {'B', 'M', 'X', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ResNet& model, const Checkpoint& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const ModelSpec& s = model.spec();
  put<std::int32_t>(out, s.resolution);
  for (int w : s.widths) put<std::int32_t>(out, w);
  put<std::int32_t>(out, s.num_classes);
  put<std::int32_t>(out, s.cam_stage);
  put<std::int32_t>(out, meta.train.epochs);
  put<std::int32_t>(out, meta.train.batch_size);
  put<double>(out, meta.train.learning_rate);
  put<std::uint64_t>(out, meta.train.seeds.size());
  for (auto sd : meta.train.seeds) put<std::uint64_t>(out, sd);
  put<std::uint64_t>(out, meta.seed);
  put<std::int32_t>(out, meta.best_epoch);
  model.save_state(out);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

std::pair<ResNet, Checkpoint> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  Checkpoint meta;
  meta.spec.resolution = get<std::int32_t>(in);
  for (int& w : meta.spec.widths) w = get<std::int32_t>(in);
  meta.spec.num_classes = get<std::int32_t>(in);
  meta.spec.cam_stage = get<std::int32_t>(in);
  meta.train.epochs = get<std::int32_t>(in);
  meta.train.batch_size = get<std::int32_t>(in);
  meta.train.learning_rate = get<double>(in);
  const auto n_seeds = get<std::uint64_t>(in);
  if (n_seeds > 1024) throw std::runtime_error("checkpoint: implausible seed count");
  meta.train.seeds.clear();
  for (std::uint64_t i = 0; i < n_seeds; ++i) meta.train.seeds.push_back(get<std::uint64_t>(in));
  meta.seed = get<std::uint64_t>(in);
  meta.best_epoch = get<std::int32_t>(in);
  ResNet model(meta.spec, 0);
  model.load_state(in);
  return {std::move(model), std::move(meta)};
}

}  // namespace backmix
