#include "jepa/train/trainer.hpp"

#include "jepa/core/rng.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace jepa::train {

Trainer::Trainer(TrainConfig cfg) : Trainer(std::move(cfg), false) {}

Trainer::Trainer(TrainConfig cfg, bool defer_data) : cfg_(std::move(cfg)) {
  cfg_.validate();
  model_.init(cfg_.model(), cfg_.seed);
  AdamWConfig oc;
  oc.weight_decay = cfg_.weight_decay;
  opt_ = std::make_unique<AdamW>(model_.named_params(), oc);
  if (!defer_data) load_data();
}

std::unique_ptr<Trainer> Trainer::resume(const std::string& ckpt_path) {
  CheckpointInfo info = read_checkpoint_info(ckpt_path);
  std::unique_ptr<Trainer> t(new Trainer(info.config, true));
  info = load_checkpoint(ckpt_path, t->model_, t->opt_.get());
  t->step_ = info.step;
  t->history_ = info.history;
  t->load_data();
  return t;
}

void Trainer::load_data() {
  if (cfg_.robot_data.empty()) throw std::invalid_argument("trainer: robot_data path is empty");
  robot_ = data::Dataset::load(cfg_.robot_data);
  auto check = [&](const data::Dataset& d, const char* which) {
    if (d.frames_per_episode != cfg_.horizon + 1)
      throw std::runtime_error(std::string("trainer: ") + which + " dataset has " +
                               std::to_string(d.frames_per_episode - 1) +
                               " transitions per episode, config horizon is " +
                               std::to_string(cfg_.horizon));
    if (d.frame_hw != cfg_.frame_hw)
      throw std::runtime_error(std::string("trainer: ") + which + " dataset frame size " +
                               std::to_string(d.frame_hw) + " does not match config");
    if (d.action_horizon != cfg_.horizon_act)
      throw std::runtime_error(std::string("trainer: ") + which + " dataset action horizon " +
                               std::to_string(d.action_horizon) + " does not match config");
  };
  check(robot_, "robot");
  if (cfg_.mix_ratio < 1.0f && !robot_.with_actions)
    throw std::runtime_error("trainer: robot dataset has no actions but action-labeled steps are configured");
  if (robot_.with_actions && robot_.action_dim != cfg_.action_dim)
    throw std::runtime_error("trainer: robot dataset action_dim " +
                             std::to_string(robot_.action_dim) + " does not match config " +
                             std::to_string(cfg_.action_dim));
  if (!cfg_.human_data.empty()) {
    human_ = data::Dataset::load(cfg_.human_data);
    check(*human_, "human");
  }
  if (cfg_.mix_ratio > 0.0f && !human_ && !robot_.with_actions)
    throw std::runtime_error("trainer: no usable action-free stream");

  robot_states_.reserve(robot_.episodes.size());
  for (const auto& e : robot_.episodes) robot_states_.push_back(cache_episode_states(e));
  if (human_)
    for (const auto& e : human_->episodes) human_states_.push_back(cache_episode_states(e));
}

Tensor Trainer::cache_episode_states(const data::Episode& e) {
  std::vector<Tensor> steps;
  Shape fshape{e.frames.dim(0), e.frames.dim(2), e.frames.dim(3), e.frames.dim(4)};
  for (Eigen::Index t = 0; t < e.frames.dim(1); ++t)
    steps.push_back(model_.encoder.encode_state(reshape(slice(e.frames, 1, t, 1), fshape)));
  return stack0(steps);
}

StepMode Trainer::mode_at(int step) const {
  return rng::uniform(rng::key(cfg_.seed, rng::kBatchMode, std::uint64_t(step)), 0) <
                 double(cfg_.mix_ratio)
             ? StepMode::kActionFree
             : StepMode::kActionLabeled;
}

StepMetrics Trainer::train_step(StepMode mode) {
  const bool labeled = mode == StepMode::kActionLabeled;
  if (labeled && !robot_.with_actions)
    throw std::runtime_error("train_step: action-labeled step on a dataset without actions");

  const data::Dataset& src = (!labeled && human_) ? *human_ : robot_;
  const std::vector<Tensor>& cache = (!labeled && human_) ? human_states_ : robot_states_;
  const int b = cfg_.batch_size;
  const int stepno = step_ + 1;
  const Eigen::Index t_steps = cfg_.horizon;

  std::uint64_t pick = rng::key(cfg_.seed, rng::kBatchPick, std::uint64_t(stepno), labeled ? 1 : 0);
  std::vector<size_t> idx;
  for (int i = 0; i < b; ++i) idx.push_back(size_t(rng::index(pick, std::uint64_t(i), src.episodes.size())));

  std::vector<BackboneSequence> seqs;
  std::vector<Tensor> st_in, st_tgt;
  for (size_t e : idx) {
    const data::Episode& ep = src.episodes[e];
    Shape t0{ep.frames.dim(0), ep.frames.dim(2), ep.frames.dim(3), ep.frames.dim(4)};
    seqs.push_back(
        model_.backbone.build_sequence(reshape(slice(ep.frames, 1, 0, 1), t0), ep.instruction));
    st_in.push_back(slice(cache[e], 0, 0, t_steps));
    st_tgt.push_back(slice(cache[e], 0, 1, t_steps));
  }
  BackboneOutput bo = model_.backbone.forward(seqs);

  StepMetrics m;
  m.step = stepno;
  m.lr0 = lr_at(stepno, cfg_.lr_backbone, cfg_.warmup_steps, cfg_.total_steps);
  m.lr1 = lr_at(stepno, cfg_.lr_action, cfg_.warmup_steps, cfg_.total_steps);

  Tensor total;
  const bool want_wm = cfg_.beta > 0.0f || !labeled;
  Tensor lwm;
  if (want_wm) {
    lwm = wm_loss(model_.wm.predict(stack0(st_in), bo.z), stack0(st_tgt));
    m.loss_wm = lwm.item();
  }
  if (labeled) {
    const Eigen::Index h = cfg_.horizon_act, a = cfg_.action_dim;
    Tensor raw = Tensor::zeros({Eigen::Index(b), h, a});
    Tensor proprio = Tensor::zeros({Eigen::Index(b), Eigen::Index(data::kProprioDim)});
    for (int i = 0; i < b; ++i) {
      const data::Episode& ep = src.episodes[idx[size_t(i)]];
      std::memcpy(raw.data() + i * h * a, ep.actions->data(), size_t(h * a) * sizeof(Scalar));
      std::copy(ep.proprio.begin(), ep.proprio.end(),
                proprio.data() + i * Eigen::Index(data::kProprioDim));
    }
    Tensor a_clean = data::preprocess_actions(raw, src.bounds);
    Tensor eps = Tensor::zeros(a_clean.shape());
    std::vector<Scalar> ts;
    for (int i = 0; i < b; ++i) {
      std::uint64_t nk = rng::key(cfg_.seed, rng::kFlowNoise, std::uint64_t(stepno), std::uint64_t(i));
      for (Eigen::Index j = 0; j < h * a; ++j)
        eps.data()[i * h * a + j] = rng::normal(nk, std::uint64_t(j));
      ts.push_back(Scalar(
          rng::uniform(rng::key(cfg_.seed, rng::kFlowTime, std::uint64_t(stepno)), std::uint64_t(i))));
    }
    Tensor lfm = model_.head.fm_loss(a_clean, eps, ts, bo.z_a, proprio);
    m.loss_fm = lfm.item();
    total = want_wm ? add(lfm, scale(lwm, cfg_.beta)) : lfm;
  } else if (cfg_.beta > 0.0f) {
    total = cfg_.beta == 1.0f ? lwm : scale(lwm, cfg_.beta);
  } else {
    // beta = 0 on the action-free stream leaves nothing to optimize; scaling
    // by zero would still touch every gradient and let weight decay drift.
    total = Tensor::scalar(0.0f);
  }
  m.loss_total = total.item();

  if (!total.node()->parents.empty()) backward(total);
  opt_->step({m.lr0, m.lr1});
  opt_->zero_grad();
  ++step_;
  history_.push_back(m);
  if (on_step) on_step(m);
  return m;
}

void Trainer::run() {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg_.out_dir, ec);
  {
    std::ofstream cf(fs::path(cfg_.out_dir) / "config.json", std::ios::trunc);
    cf << cfg_.to_json() << "\n";
  }
  while (step_ < cfg_.total_steps) {
    train_step(mode_at(step_ + 1));
    if (step_ % cfg_.checkpoint_every == 0 && step_ < cfg_.total_steps) {
      save((fs::path(cfg_.out_dir) / ("ckpt_step" + std::to_string(step_) + ".bin")).string());
      write_metrics_csv((fs::path(cfg_.out_dir) / "metrics.csv").string());
    }
  }
  save((fs::path(cfg_.out_dir) / "ckpt_final.bin").string());
  write_metrics_csv((fs::path(cfg_.out_dir) / "metrics.csv").string());
}

void Trainer::save(const std::string& path) {
  save_checkpoint(path, cfg_, step_, model_, opt_.get(), history_);
}

void Trainer::write_metrics_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("trainer: cannot write metrics to '" + path + "'");
  os << "step,loss_total,loss_wm,loss_fm,lr_group0,lr_group1\n";
  char buf[160];
  for (const auto& m : history_) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", m.step, double(m.loss_total),
                  double(m.loss_wm), double(m.loss_fm), double(m.lr0), double(m.lr1));
    os << buf;
  }
}

}  // namespace jepa::train
