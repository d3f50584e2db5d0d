#include "blurcast/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace blurcast::checkpoint {

namespace {
constexpr const char* kMagic = "blurcast-checkpoint";
constexpr int kVersion = 1;
}  // namespace

void write(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << kMagic << ' ' << kVersion << '\n';
  for (const auto& [k, v] : ckpt.meta) out << "meta " << k << ' ' << v << '\n';
  char buf[32];
  for (const auto& [name, t] : ckpt.tensors) {
    out << "tensor " << name << ' ' << t.rank();
    for (auto d : t.shape()) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < t.numel(); ++i) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, t[i], std::chars_format::general, 17);
      out << (i ? " " : "") << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    out << '\n';
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic || version != kVersion) throw CheckpointError(path.string() + ": not a version-1 checkpoint");
  Checkpoint ckpt;
  std::string tag;
  while (in >> tag) {
    if (tag == "meta") {
      std::string key, value;
      in >> key;
      std::getline(in >> std::ws, value);
      ckpt.meta[key] = value;
    } else if (tag == "tensor") {
      std::string name;
      std::size_t rank = 0;
      in >> name >> rank;
      if (rank > Shape::kMaxRank) throw CheckpointError(path.string() + ": rank too large for " + name);
      Shape shape;
      for (std::size_t r = 0; r < rank; ++r) {
        std::size_t d = 0;
        in >> d;
        shape.push_back(d);
      }
      std::vector<double> values(shape_numel(shape));
      for (auto& v : values) {
        std::string tok;
        in >> tok;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size())
          throw CheckpointError(path.string() + ": bad value '" + tok + "' in " + name);
      }
      if (!in) throw CheckpointError(path.string() + ": truncated tensor " + name);
      ckpt.tensors.emplace_back(name, Tensor(std::move(shape), std::move(values)));
    } else {
      throw CheckpointError(path.string() + ": unexpected token '" + tag + "'");
    }
  }
  return ckpt;
}

Checkpoint from_model(const pipeline::ModelParams& params, std::map<std::string, std::string> meta) {
  Checkpoint c;
  c.meta = std::move(meta);
  c.meta["variant"] = std::string(pipeline::to_string(params.variant));
  for (const auto& [name, t] : params.named()) c.tensors.emplace_back(name, *t);
  return c;
}

void load_into(const Checkpoint& ckpt, pipeline::ModelParams& params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
  auto named = params.named();
  auto slots = params.tensors();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& name = named[i].first;
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
    if (it->second->shape() != slots[i]->shape())
      throw CheckpointError("tensor '" + name + "' has shape " + shape_str(it->second->shape()) + ", expected " +
                            shape_str(slots[i]->shape()));
    *slots[i] = *it->second;
  }
}

}  // namespace blurcast::checkpoint
