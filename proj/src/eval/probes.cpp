#include "jepa/eval/probes.hpp"

#include "jepa/core/ops.hpp"
#include "jepa/core/rng.hpp"
#include "jepa/data/render.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace jepa::eval {

using nlohmann::ordered_json;

namespace {

bool same_bytes(const Tensor& a, const Tensor& b) {
  return a.numel() == b.numel() &&
         std::memcmp(a.data(), b.data(), size_t(a.numel()) * sizeof(Scalar)) == 0;
}

Tensor clone_values(const Tensor& a) { return Tensor::from_data(a.shape(), a.data()); }

// Adds large keyed noise to one contiguous range of a value buffer.
void perturb_range(Tensor& t, Eigen::Index start, Eigen::Index count, std::uint64_t k) {
  for (Eigen::Index i = 0; i < count; ++i)
    t.data()[start + i] += 1.0f + float(rng::uniform(k, std::uint64_t(i)));
}

struct BackboneOut {
  Tensor z, z_a;
};

BackboneOut backbone_outputs(const ModelBundle& m, const Tensor& frames,
                             const std::vector<Eigen::Index>& instruction) {
  NoGradGuard ng;
  const auto& c = m.cfg.backbone;
  Tensor t0 = reshape(slice(frames, 1, 0, 1), {c.views, c.frame_hw, c.frame_hw, 3});
  auto bo = m.backbone.forward({m.backbone.build_sequence(t0, instruction)});
  return {bo.z, bo.z_a};
}

}  // namespace

std::vector<CheckResult> leakage_checks(const ModelBundle& m, std::uint64_t seed) {
  const auto& c = m.cfg.backbone;
  const int t1 = c.horizon + 1;
  const Eigen::Index frame_numel = Eigen::Index(c.frame_hw) * c.frame_hw * 3;
  Tensor frames = Tensor::randn({c.views, t1, c.frame_hw, c.frame_hw, 3},
                                rng::key(seed, rng::kProbe, 1), 0.5f);
  std::vector<Eigen::Index> instruction = env::instruction_tokens(0, 0, 0);
  BackboneOut base = backbone_outputs(m, frames, instruction);

  std::vector<CheckResult> out;
  for (int v = 0; v < c.views; ++v) {
    for (int j = 1; j < t1; ++j) {
      Tensor mutated = clone_values(frames);
      perturb_range(mutated, (Eigen::Index(v) * t1 + j) * frame_numel, frame_numel,
                    rng::key(seed, rng::kProbe, 2, std::uint64_t(v), std::uint64_t(j)));
      BackboneOut got = backbone_outputs(m, mutated, instruction);
      bool ok = same_bytes(base.z, got.z) && same_bytes(base.z_a, got.z_a);
      out.push_back({"leakage view " + std::to_string(v) + " frame t" + std::to_string(j), ok,
                     ok ? "z and z_a byte-identical under frame perturbation"
                        : "future frame perturbation reached z or z_a"});
    }
  }
  return out;
}

CheckResult mask_oracle_check() {
  const int ts[] = {1, 2, 4, 8};
  const int ks[] = {1, 3, 6};
  const int ns[] = {1, 4, 128};
  int shapes = 0;
  for (int t : ts) {
    for (int k : ks) {
      for (int n : ns) {
        AttnMask got = build_mask(t, k, n);
        Eigen::Index block = Eigen::Index(k) + n, s = Eigen::Index(t) * block;
        if (got.rows != s || got.cols != s)
          return {"mask oracle", false,
                  "wrong shape for T=" + std::to_string(t) + " K=" + std::to_string(k) +
                      " N_s=" + std::to_string(n)};
        for (Eigen::Index p = 0; p < s; ++p)
          for (Eigen::Index q = 0; q < s; ++q)
            if (got.at(p, q) != (q / block <= p / block))
              return {"mask oracle", false,
                      "mismatch at (" + std::to_string(p) + "," + std::to_string(q) +
                          ") for T=" + std::to_string(t) + " K=" + std::to_string(k) +
                          " N_s=" + std::to_string(n)};
        ++shapes;
      }
    }
  }
  return {"mask oracle", true,
          "matches the block rule elementwise on " + std::to_string(shapes) + " shapes"};
}

namespace {

// Bitwise comparison of every prediction strictly before block m.
std::vector<CheckResult> causality_for(const ModelBundle& m, std::uint64_t seed,
                                       const char* label) {
  const auto& c = m.cfg.wm;
  const int t = c.horizon;
  Tensor states = Tensor::randn({1, t, c.n_state, c.d_s}, rng::key(seed, rng::kProbe, 3), 1.0f);
  Tensor z = Tensor::randn({1, t, c.latent_k, c.d_model}, rng::key(seed, rng::kProbe, 4), 1.0f);
  NoGradGuard ng;
  Tensor base = m.wm.predict(states, z);

  std::vector<CheckResult> out;
  const Eigen::Index state_block = c.n_state * c.d_s;
  const Eigen::Index z_block = Eigen::Index(c.latent_k) * c.d_model;
  for (int mi = 1; mi < t; ++mi) {
    Tensor s2 = clone_values(states);
    perturb_range(s2, mi * state_block, state_block,
                  rng::key(seed, rng::kProbe, 5, std::uint64_t(mi)));
    Tensor z2 = clone_values(z);
    perturb_range(z2, mi * z_block, z_block, rng::key(seed, rng::kProbe, 6, std::uint64_t(mi)));
    Tensor ps = m.wm.predict(s2, z);
    Tensor pz = m.wm.predict(states, z2);
    size_t prefix = size_t(mi) * size_t(state_block) * sizeof(Scalar);
    bool ok_s = std::memcmp(base.data(), ps.data(), prefix) == 0;
    bool ok_z = std::memcmp(base.data(), pz.data(), prefix) == 0;
    out.push_back({std::string(label) + " block " + std::to_string(mi), ok_s && ok_z,
                   ok_s && ok_z ? "earlier predictions byte-identical"
                   : ok_s       ? "latent perturbation leaked backwards"
                   : ok_z       ? "state perturbation leaked backwards"
                                : "state and latent perturbations leaked backwards"});
  }
  return out;
}

}  // namespace

std::vector<CheckResult> wm_causality_checks(const ModelBundle& m, std::uint64_t seed) {
  return causality_for(m, seed, "causality");
}

CheckResult mask_fault_injection_check(ModelBundle& m, std::uint64_t seed) {
  MaskPtr original = m.wm.mask;
  AttnMask corrupt(m.cfg.wm.seq_len(), m.cfg.wm.seq_len(), true);
  m.wm.override_mask(finalized(std::move(corrupt)));
  auto results = causality_for(m, seed, "fault");
  m.wm.override_mask(original);
  bool detected = false;
  for (const auto& r : results) detected |= !r.pass;
  return {"mask fault injection", detected,
          detected ? "permissive mask detected by the causality probe"
                   : "corrupted mask went unnoticed"};
}

std::vector<CheckResult> frozen_encoder_checks(ModelBundle& m, std::uint64_t init_seed,
                                               std::uint64_t probe_seed) {
  std::vector<CheckResult> out;

  ModelBundle fresh;
  fresh.init(m.cfg, init_seed);
  std::vector<NamedParameter> got, ref;
  m.encoder.collect("encoder", got);
  fresh.encoder.collect("encoder", ref);
  bool bits = got.size() == ref.size();
  std::string first_diff;
  for (size_t i = 0; bits && i < got.size(); ++i) {
    if (got[i].name != ref[i].name ||
        !same_bytes(got[i].param->value(), ref[i].param->value())) {
      bits = false;
      first_diff = got[i].name;
    }
  }
  out.push_back({"frozen encoder bits", bits,
                 bits ? std::to_string(got.size()) + " parameters bit-identical to a fresh init"
                      : "parameter '" + first_diff + "' drifted from initialization"});

  // Training-style graph: both losses, full backward.
  const auto& bc = m.cfg.backbone;
  const auto& hc = m.cfg.head;
  const int t1 = bc.horizon + 1;
  Tensor frames = Tensor::randn({bc.views, t1, bc.frame_hw, bc.frame_hw, 3},
                                rng::key(probe_seed, rng::kProbe, 7), 0.5f);
  std::vector<Eigen::Index> instruction = env::instruction_tokens(1, 1, 1);
  std::vector<Tensor> st;
  for (int t = 0; t < t1; ++t)
    st.push_back(m.encoder.encode_state(
        reshape(slice(frames, 1, t, 1), {bc.views, bc.frame_hw, bc.frame_hw, 3})));
  auto bo = m.backbone.forward({m.backbone.build_sequence(
      reshape(slice(frames, 1, 0, 1), {bc.views, bc.frame_hw, bc.frame_hw, 3}), instruction)});
  Tensor sin = reshape(stack0({st.begin(), st.end() - 1}),
                       {1, bc.horizon, m.cfg.wm.n_state, m.cfg.wm.d_s});
  Tensor tgt = reshape(stack0({st.begin() + 1, st.end()}),
                       {1, bc.horizon, m.cfg.wm.n_state, m.cfg.wm.d_s});
  Tensor lwm = wm_loss(m.wm.predict(sin, bo.z), tgt);
  Tensor a_clean = Tensor::randn({1, hc.horizon_act, hc.action_dim},
                                 rng::key(probe_seed, rng::kProbe, 8), 0.3f);
  Tensor eps = Tensor::randn({1, hc.horizon_act, hc.action_dim},
                             rng::key(probe_seed, rng::kProbe, 9), 1.0f);
  Tensor proprio =
      Tensor::randn({1, hc.proprio_dim}, rng::key(probe_seed, rng::kProbe, 10), 1.0f);
  Tensor lfm = m.head.fm_loss(a_clean, eps, {0.5f}, bo.z_a, proprio);
  backward(add(lfm, lwm));

  bool zero = true;
  std::string touched;
  for (auto& p : got) {
    if (p.param->value().grad_touched()) {
      zero = false;
      touched = p.name;
    }
  }
  for (auto& p : m.named_params()) p.param->value().zero_grad();
  out.push_back({"frozen encoder gradient", zero,
                 zero ? "no encoder parameter touched by a joint-loss backward"
                      : "gradient reached '" + touched + "'"});
  return out;
}

std::vector<CheckResult> probe_suite(ModelBundle& m, std::uint64_t init_seed,
                                     std::uint64_t probe_seed) {
  std::vector<CheckResult> out = leakage_checks(m, probe_seed);
  out.push_back(mask_oracle_check());
  auto causal = wm_causality_checks(m, probe_seed);
  out.insert(out.end(), causal.begin(), causal.end());
  out.push_back(mask_fault_injection_check(m, probe_seed));
  auto frozen = frozen_encoder_checks(m, init_seed, probe_seed);
  out.insert(out.end(), frozen.begin(), frozen.end());
  return out;
}

double cosine_distance(const Scalar* a, const Scalar* b, Eigen::Index n) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    dot += double(a[i]) * double(b[i]);
    na += double(a[i]) * double(a[i]);
    nb += double(b[i]) * double(b[i]);
  }
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cosine_distance: zero-norm vector");
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<Scalar> pooled_latent(const ModelBundle& m, const data::Episode& e) {
  BackboneOut bo = backbone_outputs(m, e.frames, e.instruction);
  Eigen::Index rows = bo.z.dim(1) * bo.z.dim(2), d = bo.z.dim(3);
  std::vector<Scalar> pooled(size_t(d), 0.0f);
  for (Eigen::Index c = 0; c < d; ++c) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) acc += double(bo.z.data()[r * d + c]);
    pooled[size_t(c)] = Scalar(acc / double(rows));
  }
  return pooled;
}

RelevanceReport action_relevance(const ModelBundle& m, const data::Dataset& paired,
                                 std::uint64_t seed, int n_boot) {
  if (!paired.paired) throw std::runtime_error("relevance: dataset is not paired");
  if (paired.n_episodes % 3 != 0)
    throw std::runtime_error("relevance: paired dataset must hold base/same/diff triplets");
  if (n_boot < 2) throw std::invalid_argument("relevance: n_boot must be >= 2");
  const int n = paired.n_episodes / 3;

  std::vector<double> delta(static_cast<size_t>(n));
  double ds_acc = 0.0, dd_acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& base = paired.at(size_t(3 * i));
    const auto& same = paired.at(size_t(3 * i + 1));
    const auto& diff = paired.at(size_t(3 * i + 2));
    std::vector<Scalar> pb = pooled_latent(m, base);
    std::vector<Scalar> ps = pooled_latent(m, same);
    std::vector<Scalar> pd = pooled_latent(m, diff);
    Eigen::Index d = Eigen::Index(pb.size());
    double dsi = cosine_distance(pb.data(), ps.data(), d);
    double ddi = cosine_distance(pb.data(), pd.data(), d);
    ds_acc += dsi;
    dd_acc += ddi;
    delta[size_t(i)] = ddi - dsi;
  }

  std::vector<double> boots(static_cast<size_t>(n_boot));
  for (int b = 0; b < n_boot; ++b) {
    std::uint64_t kb = rng::key(seed, rng::kBootstrap, std::uint64_t(b));
    double acc = 0.0;
    for (int j = 0; j < n; ++j)
      acc += delta[size_t(rng::index(kb, std::uint64_t(j), std::uint64_t(n)))];
    boots[size_t(b)] = acc / double(n);
  }
  std::sort(boots.begin(), boots.end());

  RelevanceReport r;
  r.n_pairs = n;
  r.n_boot = n_boot;
  r.seed = seed;
  r.d_same = float(ds_acc / double(n));
  r.d_diff = float(dd_acc / double(n));
  r.delta = float((dd_acc - ds_acc) / double(n));
  // Empirical order statistics at the 5th and 95th percentile indices.
  r.ci_lo = float(boots[size_t((std::int64_t(n_boot) * 5) / 100)]);
  r.ci_hi = float(boots[std::min(size_t(n_boot) - 1, size_t((std::int64_t(n_boot) * 95) / 100))]);
  return r;
}

std::string relevance_json(const RelevanceReport& r) {
  ordered_json j;
  j["n_pairs"] = r.n_pairs;
  j["n_boot"] = r.n_boot;
  j["seed"] = r.seed;
  j["d_same"] = r.d_same;
  j["d_diff"] = r.d_diff;
  j["delta"] = r.delta;
  j["ci90"] = {r.ci_lo, r.ci_hi};
  return j.dump(2) + "\n";
}

AttentionInspection inspect_attention(const ModelBundle& m, const data::Episode& e, int layer) {
  const auto& c = m.cfg.backbone;
  if (layer < 0 || layer >= c.layers)
    throw std::invalid_argument("inspect-attention: layer must lie in [0, " +
                                std::to_string(c.layers) + ")");
  NoGradGuard ng;
  Tensor t0 = reshape(slice(e.frames, 1, 0, 1), {c.views, c.frame_hw, c.frame_hw, 3});
  auto seq = m.backbone.build_sequence(t0, e.instruction);
  Tensor attn;
  (void)m.backbone.forward({seq}, layer, &attn);

  AttentionInspection a;
  a.layer = layer;
  a.grid = c.frame_hw / c.patch;
  a.views = c.views;
  a.t_steps = seq.t_steps;
  a.k_rep = seq.k_rep;
  a.n_image = seq.n_image;

  const Eigen::Index s = seq.length();
  const Eigen::Index heads = attn.dim(0);
  const Eigen::Index rows = Eigen::Index(a.t_steps) * a.k_rep;
  const Eigen::Index first_latent = seq.n_image + seq.n_instr;
  a.weights.assign(size_t(rows * a.n_image), 0.0f);
  for (Eigen::Index r = 0; r < rows; ++r) {
    Eigen::Index p = first_latent + r;
    double total = 0.0;
    for (Eigen::Index q = 0; q < a.n_image; ++q) {
      double acc = 0.0;
      for (Eigen::Index h = 0; h < heads; ++h) acc += double(attn.data()[(h * s + p) * s + q]);
      acc /= double(heads);
      a.weights[size_t(r * a.n_image + q)] = Scalar(acc);
      total += acc;
    }
    if (total <= 0.0)
      throw std::runtime_error("inspect-attention: a latent row carries no image attention");
    for (Eigen::Index q = 0; q < a.n_image; ++q)
      a.weights[size_t(r * a.n_image + q)] = Scalar(double(a.weights[size_t(r * a.n_image + q)]) / total);
  }

  a.object_mask.reserve(size_t(a.n_image));
  for (int v = 0; v < a.views; ++v) {
    auto mv = env::object_patch_mask(e.state0, v, c.patch);
    a.object_mask.insert(a.object_mask.end(), mv.begin(), mv.end());
  }

  double obj_acc = 0.0, bg_acc = 0.0;
  Eigen::Index n_obj = 0, n_bg = 0;
  for (Eigen::Index q = 0; q < a.n_image; ++q) (a.object_mask[size_t(q)] ? n_obj : n_bg) += 1;
  if (n_obj > 0 && n_bg > 0) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      double o = 0.0, g = 0.0;
      for (Eigen::Index q = 0; q < a.n_image; ++q) {
        double w = double(a.weights[size_t(r * a.n_image + q)]);
        (a.object_mask[size_t(q)] ? o : g) += w;
      }
      obj_acc += o / double(n_obj);
      bg_acc += g / double(n_bg);
    }
    a.object_mass = float(obj_acc / double(rows));
    a.background_mass = float(bg_acc / double(rows));
  }
  return a;
}

std::string attention_csv(const AttentionInspection& a) {
  std::string out = "t,k,view,row,col,weight\n";
  const Eigen::Index per_view = Eigen::Index(a.grid) * a.grid;
  char buf[96];
  for (int t = 0; t < a.t_steps; ++t) {
    for (int k = 0; k < a.k_rep; ++k) {
      Eigen::Index r = Eigen::Index(t) * a.k_rep + k;
      for (int v = 0; v < a.views; ++v) {
        for (int gy = 0; gy < a.grid; ++gy) {
          for (int gx = 0; gx < a.grid; ++gx) {
            Eigen::Index q = Eigen::Index(v) * per_view + Eigen::Index(gy) * a.grid + gx;
            std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%d,%.9g\n", t, k, v, gy, gx,
                          double(a.weights[size_t(r * a.n_image + q)]));
            out += buf;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace jepa::eval
