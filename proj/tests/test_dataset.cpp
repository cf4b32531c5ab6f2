#include "test_support.hpp"

#include "jepa/data/dataset.hpp"
#include "jepa/data/render.hpp"

#include <fstream>

using namespace jepa;
using namespace jepa::data;
using test::same_bytes;

namespace {

DatasetOptions small_opts(const std::string& dir, std::uint64_t seed) {
  DatasetOptions o;
  o.n_episodes = 4;
  o.seed = seed;
  o.out_dir = dir;
  o.nuisance = default_nuisance();
  return o;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Tensor frame_of(const Episode& e, int view, int step) {
  Eigen::Index hw = e.frames.dim(2);
  Eigen::Index fsz = hw * hw * 3;
  const Scalar* src =
      e.frames.data() + (Eigen::Index(view) * e.frames.dim(1) + step) * fsz;
  return Tensor::from_data({hw, hw, 3}, src);
}

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("generation is byte-identical across runs and directories") {
  auto d1 = test::temp_dir("gen-a");
  auto d2 = test::temp_dir("gen-b");
  generate_dataset(small_opts(d1.string(), 11));
  generate_dataset(small_opts(d2.string(), 11));
  CHECK(file_bytes(d1 / "manifest.json") == file_bytes(d2 / "manifest.json"));
  CHECK(file_bytes(d1 / "episodes.bin") == file_bytes(d2 / "episodes.bin"));

  auto d3 = test::temp_dir("gen-c");
  generate_dataset(small_opts(d3.string(), 12));
  CHECK(file_bytes(d1 / "episodes.bin") != file_bytes(d3 / "episodes.bin"));
}

TEST_CASE("a loaded dataset round-trips its options and shapes") {
  auto dir = test::temp_dir("load");
  DatasetOptions o = small_opts(dir.string(), 21);
  o.horizon = 8;
  generate_dataset(o);

  Dataset ds = Dataset::load(dir.string());
  CHECK(ds.format_version == kFormatVersion);
  CHECK(ds.n_episodes == 4);
  CHECK(ds.views == 2);
  CHECK(ds.frames_per_episode == 9);
  CHECK(ds.horizon() == 8);
  CHECK(ds.frame_hw == env::kFrameHW);
  CHECK(ds.action_dim == 3);
  CHECK(ds.action_horizon == kActionHorizon);
  CHECK(ds.seed == 21);
  CHECK_FALSE(ds.paired);
  CHECK(ds.with_actions);
  CHECK(ds.nuisance.camera_jitter_px == 2);
  REQUIRE(ds.episodes.size() == 4);

  for (const Episode& e : ds.episodes) {
    CHECK(e.frames.shape() == Shape{2, 9, 64, 64, 3});
    for (Eigen::Index i = 0; i < e.frames.numel(); ++i) {
      REQUIRE(e.frames.values()[i] >= 0.0f);
      REQUIRE(e.frames.values()[i] <= 1.0f);
    }
    REQUIRE(e.actions.has_value());
    CHECK(e.actions->shape() == Shape{kActionHorizon, 3});
    CHECK_FALSE(e.instruction.empty());
    for (Eigen::Index id : e.instruction) {
      CHECK(id >= 0);
      CHECK(id < Eigen::Index(ds.vocabulary.size()));
    }
    for (int i = 0; i < kActionHorizon; ++i) {
      for (int d = 0; d < 3; ++d) {
        float v = e.actions->values()[i * 3 + d];
        CHECK(v >= ds.bounds.dims[size_t(d)][0]);
        CHECK(v <= ds.bounds.dims[size_t(d)][1]);
      }
    }
  }
}

TEST_CASE("stored actions replay to the stored frames and outcome") {
  auto dir = test::temp_dir("replay");
  DatasetOptions o = small_opts(dir.string(), 31);
  generate_dataset(o);
  Dataset ds = Dataset::load(dir.string());

  for (const Episode& e : ds.episodes) {
    env::EnvState st = e.state0;
    for (int i = 0; i <= kActionHorizon; ++i) {
      if (i <= ds.horizon()) {
        std::uint64_t ss = env::step_render_seed(e.nuisance_seed, e.burn_in + i);
        for (int v = 0; v < 2; ++v)
          CHECK(same_bytes(env::render(st, v, ds.nuisance, ss), frame_of(e, v, i)));
      }
      if (i == kActionHorizon) break;
      std::vector<float> a(3);
      for (int d = 0; d < 3; ++d) a[size_t(d)] = e.actions->values()[i * 3 + d];
      st = env::step_env(st, a);
    }
    CHECK(st.object.pos == e.final_object_pos);
  }
}

TEST_CASE("paired generation emits aligned twin triples") {
  auto dir = test::temp_dir("paired");
  DatasetOptions o = small_opts(dir.string(), 41);
  o.n_episodes = 4;
  o.paired = true;
  generate_dataset(o);
  Dataset ds = Dataset::load(dir.string());
  CHECK(ds.paired);
  REQUIRE(ds.episodes.size() == 12);

  for (size_t b = 0; b < ds.episodes.size(); b += 3) {
    const Episode& base = ds.episodes[b];
    const Episode& same = ds.episodes[b + 1];
    const Episode& diff = ds.episodes[b + 2];
    CHECK(base.twin == TwinKind::kBase);
    CHECK(base.twin_base == -1);
    CHECK(same.twin == TwinKind::kSameAction);
    CHECK(same.twin_base == base.index);
    CHECK(diff.twin == TwinKind::kDiffAction);
    CHECK(diff.twin_base == base.index);

    // Same action, different nuisance: identical controls and initial state,
    // different pixels.
    CHECK(same_bytes(*same.actions, *base.actions));
    CHECK(same.instruction == base.instruction);
    CHECK(same.layout_seed == base.layout_seed);
    CHECK(same.nuisance_seed != base.nuisance_seed);
    CHECK(same.state0.gripper == base.state0.gripper);
    CHECK(same.state0.object.pos == base.state0.object.pos);
    CHECK(same.state0.zone == base.state0.zone);
    CHECK_FALSE(same_bytes(same.frames, base.frames));

    // Different action, same nuisance: identical layout and nuisance stream;
    // only the target zone, the instruction, and the carry phase change.
    CHECK(diff.nuisance_seed == base.nuisance_seed);
    CHECK(diff.layout_seed == base.layout_seed);
    CHECK(diff.burn_in == base.burn_in);
    CHECK(diff.state0.gripper == base.state0.gripper);
    CHECK(diff.state0.object.pos == base.state0.object.pos);
    CHECK(diff.state0.zone != base.state0.zone);
    CHECK(diff.instruction != base.instruction);
    CHECK_FALSE(same_bytes(*diff.actions, *base.actions));
    CHECK_FALSE(same_bytes(frame_of(diff, 0, ds.horizon()), frame_of(base, 0, ds.horizon())));
  }
}

TEST_CASE("view normalization always lands on exactly two views") {
  Tensor one = Tensor::randn({1, 3, 8, 8, 3}, rng::key(51, rng::kProbe, 0));
  Episode e1;
  e1.frames = one;
  normalize_views(e1);
  REQUIRE(e1.views() == 2);
  CHECK(same_bytes(frame_of(e1, 0, 1), frame_of(e1, 1, 1)));

  Tensor two = Tensor::randn({2, 3, 8, 8, 3}, rng::key(51, rng::kProbe, 1));
  Episode e2;
  e2.frames = two;
  normalize_views(e2);
  CHECK(same_bytes(e2.frames, two));

  Tensor four = Tensor::randn({4, 3, 8, 8, 3}, rng::key(51, rng::kProbe, 2));
  Episode e4;
  e4.frames = four;
  normalize_views(e4);
  REQUIRE(e4.views() == 2);
  CHECK(same_bytes(e4.frames, slice(four, 0, 0, 2)));
}

TEST_CASE("action preprocessing maps to the unit cube and binarizes the gripper") {
  ActionBounds b = ActionBounds::for_dim(3);
  REQUIRE(b.dims.size() == 3);
  CHECK(b.gripper_dim() == 2);
  b.validate();

  Tensor raw = Tensor::zeros({4, 3});
  for (int i = 0; i < 4; ++i)
    for (int d = 0; d < 3; ++d) {
      float lo = b.dims[size_t(d)][0], hi = b.dims[size_t(d)][1];
      raw.values()[i * 3 + d] =
          lo + (hi - lo) * float(rng::uniform(rng::key(61, rng::kProbe, 0), i * 3 + d));
    }
  Tensor norm = preprocess_actions(raw, b);
  for (Eigen::Index i = 0; i < norm.numel(); ++i) {
    CHECK(norm.values()[i] >= 0.0f);
    CHECK(norm.values()[i] <= 1.0f);
  }
  for (int i = 0; i < 4; ++i) {
    float g = norm.values()[i * 3 + 2];
    CHECK((g == 0.0f || g == 1.0f));
  }

  Tensor back = denormalize_actions(norm, b);
  for (int i = 0; i < 4; ++i)
    for (int d = 0; d < 2; ++d)
      CHECK(back.values()[i * 3 + d] ==
            doctest::Approx(raw.values()[i * 3 + d]).epsilon(1e-5));

  ActionBounds bad = b;
  bad.dims[0] = {1.0f, 1.0f};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("proprio features expose pose, flags, and the previous action") {
  env::EnvState s;
  s.gripper = {0.3f, 0.7f};
  s.holding = true;
  s.closed = true;
  auto p = proprio_features(s, {0.1f, -0.2f, 1.0f});
  CHECK(p[0] == 0.3f);
  CHECK(p[1] == 0.7f);
  CHECK(p[2] == 1.0f);
  CHECK(p[3] == 1.0f);
  CHECK(p[4] == 0.1f);
  CHECK(p[5] == -0.2f);
  CHECK(p[6] == 1.0f);
  CHECK(p[7] == 1.0f);

  auto q = proprio_features(env::EnvState{}, {});
  CHECK(q[4] == 0.0f);
  CHECK(q[7] == 1.0f);
}

TEST_CASE("the task mix restricts generated episodes to the named zones") {
  auto dir = test::temp_dir("mix");
  DatasetOptions o = small_opts(dir.string(), 71);
  o.n_episodes = 8;
  o.task_mix = {env::zone_name(1)};
  generate_dataset(o);
  Dataset ds = Dataset::load(dir.string());
  for (const Episode& e : ds.episodes) CHECK(e.state0.zone == 1);

  o.task_mix = {"nowhere"};
  CHECK_THROWS_AS(generate_dataset(o), std::invalid_argument);
}

TEST_CASE("action-free generation stores no action tensors") {
  auto dir = test::temp_dir("actionfree");
  DatasetOptions o = small_opts(dir.string(), 81);
  o.with_actions = false;
  generate_dataset(o);
  Dataset ds = Dataset::load(dir.string());
  CHECK_FALSE(ds.with_actions);
  for (const Episode& e : ds.episodes) CHECK_FALSE(e.actions.has_value());
}

TEST_CASE("corrupted files are rejected with clear errors") {
  auto dir = test::temp_dir("corrupt");
  generate_dataset(small_opts(dir.string(), 91));

  SUBCASE("record magic") {
    auto path = dir / "episodes.bin";
    std::string bytes = file_bytes(path);
    bytes[0] = 'X';
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
    CHECK_THROWS_AS(Dataset::load(dir.string()), std::runtime_error);
  }
  SUBCASE("manifest magic") {
    std::string m = file_bytes(dir / "manifest.json");
    auto pos = m.find("JEPA-ACT-DATASET");
    REQUIRE(pos != std::string::npos);
    m.replace(pos, 4, "NOPE");
    std::ofstream(dir / "manifest.json", std::ios::trunc) << m;
    CHECK_THROWS_AS(Dataset::load(dir.string()), std::runtime_error);
  }
  SUBCASE("format version") {
    std::string m = file_bytes(dir / "manifest.json");
    auto pos = m.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    m.replace(pos, 19, "\"format_version\": 9");
    std::ofstream(dir / "manifest.json", std::ios::trunc) << m;
    CHECK_THROWS_AS(Dataset::load(dir.string()), std::runtime_error);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(Dataset::load((dir / "absent").string()), std::runtime_error);
  }
}

TEST_CASE("generation validates its options") {
  DatasetOptions o;
  o.out_dir = test::temp_dir("invalid").string();
  o.n_episodes = 0;
  o.seed = 1;
  CHECK_THROWS_AS(generate_dataset(o), std::invalid_argument);
  o.n_episodes = 1;
  o.horizon = 0;
  CHECK_THROWS_AS(generate_dataset(o), std::invalid_argument);
}

TEST_SUITE_END();
