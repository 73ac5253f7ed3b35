#include "meshcorr/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <thread>

#include "meshcorr/rng.hpp"
#include "meshcorr/warp.hpp"

namespace meshcorr {

namespace fs = std::filesystem;

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

int resolve_threads(int configured) {
  if (configured > 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

SampleStore::SampleStore(const DatasetManifest& manifest, const RunConfig& config)
    : manifest_(manifest), config_(config), cache_(manifest.samples.size()) {}

std::vector<std::vector<int>> SampleStore::groups(const std::string& split) const {
  std::vector<std::vector<int>> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < manifest_.samples.size(); ++i) {
    const DataSample& s = manifest_.samples[i];
    if (!split.empty() && s.split != split) continue;
    auto [it, inserted] = index.try_emplace(s.group_id, out.size());
    if (inserted) out.emplace_back();
    out[it->second].push_back(static_cast<int>(i));
  }
  return out;
}

const TrainSampleData& SampleStore::sample(int index) {
  auto& slot = cache_[static_cast<std::size_t>(index)];
  if (slot) return *slot;
  const DataSample& rec = manifest_.samples[static_cast<std::size_t>(index)];
  const fs::path root(manifest_.root);

  auto data = std::make_unique<TrainSampleData>();
  const MeshFeatureStack lq = read_stack((root / rec.lq_stack).string());
  const MeshFeatureStack hq = read_stack((root / rec.hq_stack).string());
  data->input = stack_to_input(lq);
  data->d_lq = lq.inverse_depth;
  data->d_hq = hq.inverse_depth;
  data->hq_ids = hq.triangle_id;
  data->pose = lq.pose;

  const auto label_planes = read_float_image((root / rec.label).string());
  if (label_planes.size() != 1) throw std::runtime_error("bad label file: " + rec.label);
  data->label_g = label_planes[0];
  const auto valid_planes = read_float_image((root / rec.valid).string());
  if (valid_planes.size() != 1) throw std::runtime_error("bad valid file: " + rec.valid);
  data->valid = ImageU8(data->label_g.width(), data->label_g.height(), 0);
  for (int v = 0; v < data->valid.height(); ++v)
    for (int u = 0; u < data->valid.width(); ++u)
      data->valid.at(u, v) = valid_planes[0].at(u, v) > 0.5f ? 1 : 0;

  data->weight_map = edge_weight_map(data->label_g, data->valid, weight_map_params(config_));
  slot = std::move(data);
  return *slot;
}

Trainer::Trainer(const RunConfig& config, const DatasetManifest& manifest)
    : config_(config),
      store_(manifest, config),
      net_(NetConfig{config.multiplier, 7, config.camera.height, config.camera.width,
                     config.seed}),
      threads_(resolve_threads(config.threads)) {
  validate_config(config_);
  train_groups_ = store_.groups("train");
  if (train_groups_.empty()) throw std::runtime_error("no training groups in manifest");
  net_.initialize_he(config.seed);
  adam_.resize(net_.param_count());
}

namespace {

struct BatchItem {
  int sample_index = 0;
  int group = 0;       // index into the step's group list
  bool is_target = false;
};

}  // namespace

StepStats Trainer::step() {
  const int views_per_group = 1 + config_.nearby_views;
  const int groups_per_step = std::max(1, config_.train.batch_size / views_per_group);

  // batch selection depends only on (seed, step) so resumed runs continue
  // bit-identically
  SplitMix64 rng((config_.seed + 0x9E3779B97F4A7C15ull) ^
                 (0xBF58476D1CE4E5B9ull * static_cast<std::uint64_t>(step_ + 1)));

  std::vector<std::vector<int>> batch_groups;  // sample indices, target first
  for (int g = 0; g < groups_per_step; ++g) {
    const auto& group = train_groups_[rng.below(train_groups_.size())];
    std::vector<int> order(group.size());
    for (std::size_t i = 0; i < group.size(); ++i) order[i] = static_cast<int>(i);
    // partial Fisher-Yates: pick target + nearby views
    for (std::size_t i = 0; i < order.size(); ++i) {
      const std::size_t j = i + rng.below(order.size() - i);
      std::swap(order[i], order[j]);
    }
    std::vector<int> chosen;
    const int take = std::min<int>(views_per_group, static_cast<int>(group.size()));
    for (int i = 0; i < take; ++i) chosen.push_back(group[static_cast<std::size_t>(order[i])]);
    batch_groups.push_back(std::move(chosen));
  }

  std::vector<BatchItem> items;
  for (std::size_t g = 0; g < batch_groups.size(); ++g)
    for (std::size_t k = 0; k < batch_groups[g].size(); ++k)
      items.push_back({batch_groups[g][k], static_cast<int>(g), k == 0});
  const int n_images = static_cast<int>(items.size());

  // preload samples serially (filesystem + weight-map cache)
  for (const BatchItem& item : items) store_.sample(item.sample_index);

  // forward
  std::vector<NetCache<float>> caches(items.size());
  std::vector<NetOutput> outputs(items.size());
  std::vector<ImageF> d_star(items.size());
  parallel_for(n_images, threads_, [&](int i) {
    const TrainSampleData& s = store_.sample(items[static_cast<std::size_t>(i)].sample_index);
    net_.forward(s.input, caches[static_cast<std::size_t>(i)]);
    outputs[static_cast<std::size_t>(i)] =
        CorrectionNetF::split_output(caches[static_cast<std::size_t>(i)]);
    const NetOutput& out = outputs[static_cast<std::size_t>(i)];
    ImageF star(s.d_lq.width(), s.d_lq.height());
    for (int v = 0; v < star.height(); ++v)
      for (int u = 0; u < star.width(); ++u)
        star.at(u, v) = s.d_lq.at(u, v) + out.attention.at(u, v) * out.g_star.at(u, v);
    d_star[static_cast<std::size_t>(i)] = std::move(star);
  });

  // per-image data and gradient losses on the attention-modulated error
  const double inv_batch = 1.0 / static_cast<double>(n_images);
  std::vector<ScalarLoss> data_losses(items.size());
  std::vector<ScalarLoss> grad_losses(items.size());
  std::vector<ImageF> ghat(items.size());
  parallel_for(n_images, threads_, [&](int i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const TrainSampleData& s = store_.sample(items[si].sample_index);
    const NetOutput& out = outputs[si];
    ImageF mod(out.g_star.width(), out.g_star.height());
    for (int v = 0; v < mod.height(); ++v)
      for (int u = 0; u < mod.width(); ++u)
        mod.at(u, v) = out.attention.at(u, v) * out.g_star.at(u, v);
    const double c = berhu_threshold(mod, s.label_g, s.valid, config_.berhu_factor);
    data_losses[si] = data_loss(mod, s.label_g, s.weight_map, s.valid, c);
    grad_losses[si] = gradient_loss(mod, s.label_g, s.weight_map, s.valid);
    ghat[si] = std::move(mod);
  });

  // per-group geometric consistency
  std::vector<GcResult> gc_results(batch_groups.size());
  std::vector<std::vector<int>> group_items(batch_groups.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    group_items[static_cast<std::size_t>(items[i].group)].push_back(static_cast<int>(i));
  if (config_.nearby_views > 0) {
    parallel_for(static_cast<int>(batch_groups.size()), threads_, [&](int g) {
      const auto& gi = group_items[static_cast<std::size_t>(g)];
      const std::size_t target_item = static_cast<std::size_t>(gi[0]);
      const TrainSampleData& target_sample = store_.sample(items[target_item].sample_index);
      GcView target{&d_star[target_item], &target_sample.hq_ids, target_sample.pose};
      std::vector<GcView> nearby;
      for (std::size_t k = 1; k < gi.size(); ++k) {
        const std::size_t item = static_cast<std::size_t>(gi[k]);
        const TrainSampleData& s = store_.sample(items[item].sample_index);
        nearby.push_back({&d_star[item], &s.hq_ids, s.pose});
      }
      GcOptions options;
      options.eps = config_.warp_eps;
      options.grad_to_nearby = config_.grad_to_nearby;
      gc_results[static_cast<std::size_t>(g)] = gc_loss(target, nearby, config_.camera, options);
    });
  }

  // upstream gradients per image, then backprop
  const LossWeights& lw = config_.loss_weights;
  std::vector<std::vector<float>> image_grads(items.size());
  parallel_for(n_images, threads_, [&](int i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const NetOutput& out = outputs[si];
    const int w = out.g_star.width(), h = out.g_star.height();

    ImageF d_ghat(w, h, 0.0f);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u)
        d_ghat.at(u, v) = static_cast<float>(
            inv_batch * (lw.lambda_data * data_losses[si].grad.at(u, v) +
                         lw.lambda_grad * grad_losses[si].grad.at(u, v)));

    // gc gradient w.r.t. d_star adds to d_ghat since d* = d_lq + a*g
    const std::size_t g = static_cast<std::size_t>(items[si].group);
    if (config_.nearby_views > 0) {
      const auto& gi = group_items[g];
      const GcResult& gc = gc_results[g];
      const double scale = inv_batch * lw.lambda_gc;
      if (items[si].is_target && gc.grad_target.size()) {
        for (int v = 0; v < h; ++v)
          for (int u = 0; u < w; ++u)
            d_ghat.at(u, v) += static_cast<float>(scale * gc.grad_target.at(u, v));
      } else {
        for (std::size_t k = 1; k < gi.size(); ++k)
          if (gi[k] == i && gc.grad_nearby.size() >= k) {
            const ImageF& gn = gc.grad_nearby[k - 1];
            for (int v = 0; v < h; ++v)
              for (int u = 0; u < w; ++u)
                d_ghat.at(u, v) += static_cast<float>(scale * gn.at(u, v));
          }
      }
    }

    Tensor<float> d_gstar(1, h, w), d_att(1, h, w);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        const std::size_t px = static_cast<std::size_t>(v) * w + u;
        d_gstar.v[px] = d_ghat.at(u, v) * out.attention.at(u, v);
        d_att.v[px] = d_ghat.at(u, v) * out.g_star.at(u, v);
      }

    image_grads[si].assign(net_.param_count(), 0.0f);
    net_.backward(caches[si], d_gstar, d_att, image_grads[si]);
  });

  // fixed-order reduction over images, then the regularizer term
  std::vector<float> grads(net_.param_count(), 0.0f);
  for (const auto& gbuf : image_grads)
    for (std::size_t p = 0; p < grads.size(); ++p)
      grads[p] += static_cast<float>(gbuf[p] /* already includes 1/B */);
  const double reg = l2_reg(net_.params());
  {
    const auto params = net_.params();
    const double two_lambda = 2.0 * lw.lambda_reg;
    for (std::size_t p = 0; p < grads.size(); ++p)
      grads[p] += static_cast<float>(two_lambda * params[p]);
  }

  double data_sum = 0.0, grad_sum = 0.0, gc_sum = 0.0;
  for (const ScalarLoss& l : data_losses) data_sum += l.value;
  for (const ScalarLoss& l : grad_losses) grad_sum += l.value;
  for (const GcResult& g : gc_results) gc_sum += g.value;

  StepStats stats;
  stats.report = combine_losses(data_sum * inv_batch, grad_sum * inv_batch, gc_sum * inv_batch,
                                reg, lw);
  stats.images = n_images;

  if (!std::isfinite(stats.report.total)) {
    const char* term = !std::isfinite(stats.report.data)  ? "data"
                       : !std::isfinite(stats.report.grad) ? "grad"
                       : !std::isfinite(stats.report.gc)   ? "gc"
                                                           : "reg";
    throw std::runtime_error(std::string("non-finite loss in term '") + term + "' at step " +
                             std::to_string(step_));
  }

  stats.grad_norm = clip_global_norm(grads, config_.train.clip_norm);
  stats.lr = learning_rate(config_.train, step_);
  adam_update(net_.params(), grads, adam_, stats.lr, config_.train.beta1, config_.train.beta2,
              config_.train.adam_eps);
  ++step_;
  return stats;
}

std::uint64_t Trainer::run(const std::string& out_dir, const std::string& resume_checkpoint) {
  fs::create_directories(out_dir);
  std::int64_t start_step = 0;
  if (!resume_checkpoint.empty()) {
    start_step = load_checkpoint(resume_checkpoint, net_, &adam_);
    step_ = start_step;
  }

  const fs::path log_path = fs::path(out_dir) / "train_log.csv";
  const bool fresh_log = start_step == 0;
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot open log: " + log_path.string());
  std::uint64_t digest = 1469598103934665603ull;
  const auto emit = [&](const std::string& bytes) {
    log << bytes;
    digest = fnv1a_bytes(bytes.data(), bytes.size(), digest);
  };
  if (fresh_log) emit("step,eta,total,data,grad,gc,reg,grad_norm,images\n");

  char row[320];
  while (step_ < config_.train.total_steps) {
    const std::int64_t at = step_;
    const StepStats s = step();
    if (config_.log_every > 0 && at % config_.log_every == 0) {
      std::snprintf(row, sizeof(row), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n",
                    static_cast<long long>(at), s.lr, s.report.total, s.report.data, s.report.grad,
                    s.report.gc, s.report.reg, s.grad_norm, s.images);
      emit(row);
    }
    if (config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0 &&
        step_ < config_.train.total_steps) {
      log.flush();
      save_checkpoint((fs::path(out_dir) / "checkpoint.mcp").string(), net_, &adam_, step_);
    }
  }
  log.flush();
  save_checkpoint((fs::path(out_dir) / "checkpoint.mcp").string(), net_, &adam_, step_);
  return digest;
}

EvalResult evaluate(const CorrectionNetF& net, SampleStore& store, const std::string& split,
                    const RunConfig& config) {
  const auto groups = store.groups(split);
  if (groups.empty()) throw std::runtime_error("evaluate: no groups in split '" + split + "'");

  EvalResult result;
  MetricAccumulator acc;
  double residual_sum = 0.0;
  std::size_t residual_pixels = 0;

  const int threads = resolve_threads(config.threads);
  for (const auto& group : groups) {
    const int n = static_cast<int>(group.size());
    for (int idx : group) store.sample(idx);  // serial load; cache is not thread-safe
    std::vector<ImageF> d_star(group.size());
    parallel_for(n, threads, [&](int k) {
      const TrainSampleData& s = store.sample(group[static_cast<std::size_t>(k)]);
      NetCache<float> cache;
      net.forward(s.input, cache);
      const NetOutput out = CorrectionNetF::split_output(cache);
      ImageF star(s.d_lq.width(), s.d_lq.height());
      for (int v = 0; v < star.height(); ++v)
        for (int u = 0; u < star.width(); ++u)
          star.at(u, v) = s.d_lq.at(u, v) + out.attention.at(u, v) * out.g_star.at(u, v);
      d_star[static_cast<std::size_t>(k)] = std::move(star);
    });

    for (std::size_t k = 0; k < group.size(); ++k) {
      const TrainSampleData& s = store.sample(group[k]);
      acc.add(s.d_lq, d_star[k], s.d_hq, s.valid);
    }

    for (std::size_t t = 0; t < group.size(); ++t) {
      const TrainSampleData& st = store.sample(group[t]);
      for (std::size_t nvi = 0; nvi < group.size(); ++nvi) {
        if (nvi == t) continue;
        const TrainSampleData& sn = store.sample(group[nvi]);
        const RigidTransform t_nt = compose(sn.pose, invert(st.pose));
        const Inconsistency inc = inconsistency(d_star[t], d_star[nvi], st.hq_ids, sn.hq_ids,
                                                t_nt, config.camera, config.warp_eps);
        for (int v = 0; v < inc.residual.height(); ++v)
          for (int u = 0; u < inc.residual.width(); ++u)
            if (inc.warp.unoccluded.at(u, v)) {
              residual_sum += inc.residual.at(u, v);
              ++residual_pixels;
            }
      }
    }
  }

  result.metrics = acc.report();
  result.gc_pixels = residual_pixels;
  result.gc_residual_mean = residual_pixels == 0 ? 0.0 : residual_sum / double(residual_pixels);
  return result;
}

}  // namespace meshcorr
