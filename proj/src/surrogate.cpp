#include "capaa/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "capaa/color.hpp"
#include "capaa/error.hpp"

namespace capaa::surrogate {

namespace {

nn::Network shade_network(int hidden) {
  using nn::Layer;
  return nn::Network({Layer::conv(6, hidden, 3), Layer::relu(), Layer::conv(hidden, hidden, 1), Layer::relu(),
                      Layer::conv(hidden, hidden, 1), Layer::relu(), Layer::conv(hidden, 3, 1), Layer::sigmoid()});
}

Tensor base_grid(int h, int w) {
  Tensor g(Shape{2, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g.at(0, y, x) = x;
      g.at(1, y, x) = y;
    }
  return g;
}

bool is_uniform_gray(const ProjectorImage& x) {
  const Tensor& t = x.tensor();
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::abs(v - 0.5) < 1e-12; });
}

ad::Var sample_loss(const ad::Var& pred, const Tensor& target) {
  return ad::add(ad::mean_abs_diff(pred, target), ad::scale(ad::add_scalar(ad::scale(color::ssim(pred, target), -1.0), 1.0), 0.5));
}

}  // namespace

ad::Var SurrogateModel::forward(const ad::Var& x, const ad::Var& displacement, std::span<const ad::Var> shade) const {
  if (x.shape() != gray_.shape()) {
    throw Error("shape_mismatch", "surrogate expects " + gray_.shape().str() + ", got " + x.shape().str());
  }
  const ad::Var grid = ad::add(ad::constant(base_grid(height(), width())),
                               ad::upsample_aligned(displacement, height(), width()));
  const ad::Var warped = ad::grid_sample(x, grid);
  return shade_.forward(ad::concat_channels(warped, ad::constant(gray_)), shade).out;
}

ad::Var SurrogateModel::infer(const ad::Var& x) const {
  return forward(x, ad::constant(displacement_), shade_.bind(false));
}

CapturedImage SurrogateModel::infer(const ProjectorImage& x) const {
  return CapturedImage(infer(ad::constant(x.tensor())).value());
}

Tensor SurrogateModel::sampling_grid() const {
  return base_grid(height(), width()) + ad::upsample_aligned(ad::constant(displacement_), height(), width()).value();
}

Tensor SurrogateModel::camera_to_projector(const Tensor& map) const {
  if (map.height() != height() || map.width() != width()) {
    throw Error("shape_mismatch", "map " + map.shape().str() + " does not match surrogate frame");
  }
  const Tensor disp = ad::upsample_aligned(ad::constant(displacement_), height(), width()).value();
  return ad::grid_sample(ad::constant(map), ad::constant(base_grid(height(), width()) - disp)).value();
}

double SurrogateModel::loss(const ProjectorImage& x, const CapturedImage& captured) const {
  return sample_loss(infer(ad::constant(x.tensor())), captured.tensor()).item();
}

SurrogateModel train_surrogate(const std::vector<scene::CaptureSample>& samples, const TrainOptions& options,
                               std::uint64_t seed) {
  if (samples.size() < 32) {
    throw Error("insufficient_samples", "surrogate training needs at least 32 samples, got " +
                                            std::to_string(samples.size()));
  }
  for (const auto& s : samples) {
    if (s.pose_id != samples.front().pose_id) {
      throw Error("mixed_poses", "samples come from poses " + samples.front().pose_id + " and " + s.pose_id);
    }
  }
  if (options.epochs < 1 || options.batch_size < 1 || options.learning_rate <= 0.0) {
    throw Error("invalid_config", "surrogate epochs, batch_size and learning_rate must be positive");
  }
  const auto gray_it = std::find_if(samples.begin(), samples.end(),
                                    [](const auto& s) { return is_uniform_gray(s.projector_input); });
  if (gray_it == samples.end()) throw Error("missing_gray_capture", "no gray-pattern capture among samples");
  const std::size_t gray_index = static_cast<std::size_t>(gray_it - samples.begin());

  std::mt19937_64 rng(seed);
  SurrogateModel model;
  model.pose_id_ = samples.front().pose_id;
  model.seed_ = seed;
  model.gray_ = gray_it->captured.tensor();
  model.displacement_ = Tensor(Shape{2, options.grid_size, options.grid_size});
  model.shade_ = shade_network(options.hidden);
  model.shade_.initialize(rng);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(options.validation_fraction * static_cast<double>(samples.size()))));
  std::vector<std::size_t> train, val;
  for (std::size_t i : order) {
    if (val.size() < n_val && i != gray_index) {
      val.push_back(i);
    } else {
      train.push_back(i);
    }
  }

  nn::Adam adam(options.learning_rate);
  SurrogateModel best = model;
  best.log_.best_val_loss = std::numeric_limits<double>::infinity();
  TrainLog log;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(train.size(), start + static_cast<std::size_t>(options.batch_size));
      const ad::Var disp = ad::parameter(model.displacement_);
      const std::vector<ad::Var> shade = model.shade_.bind(true);
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = samples[train[b]];
        const ad::Var l = sample_loss(model.forward(ad::constant(s.projector_input.tensor()), disp, shade),
                                      s.captured.tensor());
        epoch_loss += l.item();
        ad::backward(l);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      std::vector<Tensor*> params{&model.displacement_};
      std::vector<Tensor> grads{disp.grad() * inv};
      for (std::size_t k = 0; k < shade.size(); ++k) {
        params.push_back(&model.shade_.params()[k]);
        grads.push_back(shade[k].grad() * inv);
      }
      adam.step(params, grads);
    }
    double val_loss = 0.0;
    for (std::size_t i : val) val_loss += model.loss(samples[i].projector_input, samples[i].captured);
    val_loss /= static_cast<double>(val.size());
    log.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
    log.val_loss.push_back(val_loss);
    if (val_loss < best.log_.best_val_loss) {
      best = model;
      best.log_.best_val_loss = val_loss;
      best.log_.best_epoch = epoch;
    }
  }
  log.best_epoch = best.log_.best_epoch;
  log.best_val_loss = best.log_.best_val_loss;
  best.log_ = std::move(log);
  return best;
}

void SurrogateModel::save(const std::filesystem::path& path) const {
  nn::Checkpoint ck;
  ck.metadata = {{"kind", "surrogate"},
                 {"pose_id", pose_id_},
                 {"seed", seed_},
                 {"network", shade_.describe()},
                 {"train_loss", log_.train_loss},
                 {"val_loss", log_.val_loss},
                 {"best_epoch", log_.best_epoch},
                 {"best_val_loss", log_.best_val_loss}};
  ck.tensors.emplace_back("gray_capture", gray_);
  ck.tensors.emplace_back("displacement", displacement_);
  for (std::size_t i = 0; i < shade_.params().size(); ++i) ck.tensors.emplace_back("shade." + std::to_string(i), shade_.params()[i]);
  nn::save_checkpoint(path, ck);
}

SurrogateModel SurrogateModel::load(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  if (ck.metadata.value("kind", "") != "surrogate") throw Error("bad_checkpoint", path.string() + " is not a surrogate");
  SurrogateModel m;
  m.pose_id_ = ck.metadata.at("pose_id").get<std::string>();
  m.seed_ = ck.metadata.at("seed").get<std::uint64_t>();
  m.log_.train_loss = ck.metadata.at("train_loss").get<std::vector<double>>();
  m.log_.val_loss = ck.metadata.at("val_loss").get<std::vector<double>>();
  m.log_.best_epoch = ck.metadata.at("best_epoch").get<int>();
  m.log_.best_val_loss = ck.metadata.at("best_val_loss").get<double>();
  m.gray_ = ck.tensor("gray_capture");
  m.displacement_ = ck.tensor("displacement");
  m.shade_ = nn::Network::from_description(ck.metadata.at("network"));
  for (std::size_t i = 0; i < m.shade_.params().size(); ++i) m.shade_.params()[i] = ck.tensor("shade." + std::to_string(i));
  return m;
}

}  // namespace capaa::surrogate
