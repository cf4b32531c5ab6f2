#include "jepa/train/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace jepa::train {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'J', 'E', 'P', 'A', 'C', 'K', 'P', 'T'};
constexpr int kVersion = 1;

void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

void write_u32(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, 4); }
void write_u64(std::ostream& os, std::uint64_t v) { write_bytes(os, &v, 8); }

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_tensor_record(std::ostream& os, const std::string& name, const Shape& shape,
                         const Scalar* data, Eigen::Index numel) {
  write_u32(os, std::uint32_t(name.size()));
  write_bytes(os, name.data(), name.size());
  write_u32(os, std::uint32_t(shape.size()));
  for (Eigen::Index d : shape) write_u64(os, std::uint64_t(d));
  write_bytes(os, data, size_t(numel) * sizeof(Scalar));
}

struct RawTensor {
  Shape shape;
  std::vector<Scalar> data;
};

bool read_tensor_record(std::istream& is, std::string& name, RawTensor& t) {
  std::uint32_t name_len = read_u32(is);
  if (is.eof() || !is) return false;
  name.resize(name_len);
  is.read(name.data(), name_len);
  std::uint32_t rank = read_u32(is);
  if (rank > 8) throw std::runtime_error("checkpoint: implausible tensor rank");
  t.shape.clear();
  Eigen::Index n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    Eigen::Index d = Eigen::Index(read_u64(is));
    t.shape.push_back(d);
    n *= d;
  }
  t.data.resize(size_t(n));
  is.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(n) * sizeof(Scalar));
  if (!is) throw std::runtime_error("checkpoint: truncated tensor record");
  return true;
}

json metrics_to_json(const std::vector<StepMetrics>& h) {
  json out = json::array();
  for (const auto& m : h)
    out.push_back({m.step, double(m.loss_total), double(m.loss_wm), double(m.loss_fm),
                   double(m.lr0), double(m.lr1)});
  return out;
}

std::vector<StepMetrics> metrics_from_json(const json& j) {
  std::vector<StepMetrics> out;
  for (const json& row : j) {
    StepMetrics m;
    m.step = row.at(0).get<int>();
    m.loss_total = row.at(1).get<float>();
    m.loss_wm = row.at(2).get<float>();
    m.loss_fm = row.at(3).get<float>();
    m.lr0 = row.at(4).get<float>();
    m.lr1 = row.at(5).get<float>();
    out.push_back(m);
  }
  return out;
}

CheckpointInfo parse_header(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: unknown magic");
  std::uint64_t hlen = read_u64(is);
  std::string text(hlen, '\0');
  is.read(text.data(), std::streamsize(hlen));
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  json h = json::parse(text);
  if (h.at("version").get<int>() != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + h.at("version").dump());
  CheckpointInfo info;
  info.config = TrainConfig::from_json(h.at("config").dump());
  if (h.at("config_hash").get<std::string>() != info.config.hash())
    throw std::runtime_error("checkpoint: config hash mismatch");
  info.step = h.at("step").get<int>();
  info.adam_t = h.at("adam_t").get<std::int64_t>();
  info.history = metrics_from_json(h.at("metrics"));
  return info;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainConfig& config, int step,
                     ModelBundle& model, const AdamW* opt,
                     const std::vector<StepMetrics>& history) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write '" + path + "'");

  json header = {{"version", kVersion},
                 {"config", json::parse(config.to_json())},
                 {"config_hash", config.hash()},
                 {"step", step},
                 {"adam_t", opt ? opt->t() : 0},
                 {"metrics", metrics_to_json(history)}};
  std::string htext = header.dump();
  write_bytes(os, kMagic, 8);
  write_u64(os, htext.size());
  write_bytes(os, htext.data(), htext.size());

  std::vector<NamedParameter> params = model.named_params();
  for (const auto& np : params) {
    const Tensor& v = np.param->value();
    write_tensor_record(os, np.name, v.shape(), v.data(), v.numel());
  }
  if (opt) {
    AdamW& o = const_cast<AdamW&>(*opt);
    const auto& ops = o.params();
    for (size_t i = 0; i < ops.size(); ++i) {
      if (o.moment1(i).size() == 0) continue;
      Shape s{Eigen::Index(o.moment1(i).size())};
      write_tensor_record(os, "opt.m:" + ops[i].name, s, o.moment1(i).data(),
                          o.moment1(i).size());
      write_tensor_record(os, "opt.v:" + ops[i].name, s, o.moment2(i).data(),
                          o.moment2(i).size());
    }
  }
  os.flush();
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read '" + path + "'");
  return parse_header(is);
}

CheckpointInfo load_checkpoint(const std::string& path, ModelBundle& model, AdamW* opt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read '" + path + "'");
  CheckpointInfo info = parse_header(is);

  std::map<std::string, RawTensor> records;
  std::string name;
  RawTensor rt;
  while (read_tensor_record(is, name, rt)) records.emplace(std::move(name), std::move(rt));

  std::vector<NamedParameter> params = model.named_params();
  for (auto& np : params) {
    auto it = records.find(np.name);
    if (it == records.end())
      throw std::runtime_error("checkpoint: missing parameter '" + np.name + "'");
    Tensor& v = np.param->value();
    if (it->second.shape != v.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + np.name + "'");
    std::memcpy(v.data(), it->second.data.data(), size_t(v.numel()) * sizeof(Scalar));
    records.erase(it);
  }
  if (opt) {
    opt->set_t(info.adam_t);
    const auto& ops = opt->params();
    for (size_t i = 0; i < ops.size(); ++i) {
      auto mi = records.find("opt.m:" + ops[i].name);
      auto vi = records.find("opt.v:" + ops[i].name);
      if (mi == records.end() && vi == records.end()) continue;
      if (mi == records.end() || vi == records.end())
        throw std::runtime_error("checkpoint: half-missing moments for '" + ops[i].name + "'");
      opt->moment1(i) =
          Eigen::Map<const ArrayX>(mi->second.data.data(), Eigen::Index(mi->second.data.size()));
      opt->moment2(i) =
          Eigen::Map<const ArrayX>(vi->second.data.data(), Eigen::Index(vi->second.data.size()));
      records.erase(mi);
      records.erase(vi);
    }
  } else {
    for (auto it = records.begin(); it != records.end();)
      it = it->first.rfind("opt.", 0) == 0 ? records.erase(it) : ++it;
  }
  if (!records.empty())
    throw std::runtime_error("checkpoint: unrecognized record '" + records.begin()->first + "'");
  return info;
}

}  // namespace jepa::train
