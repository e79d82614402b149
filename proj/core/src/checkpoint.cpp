#include "labelforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "labelforge/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace labelforge {

namespace {

constexpr char kMagic[4] = {'L', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw FormatError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(Model& model, const std::string& path,
                     const CheckpointMeta& meta) {
  auto tensors = model.named_tensors();

  nlohmann::json j;
  j["preset"] = {{"family", model.preset.family},
                 {"input_h", model.preset.input_h},
                 {"input_w", model.preset.input_w},
                 {"input_c", model.preset.input_c},
                 {"width_multiplier", model.preset.width_multiplier},
                 {"depth_multiplier", model.preset.depth_multiplier},
                 {"embedding_dim", model.preset.embedding_dim}};
  j["with_projection"] = model.with_projection;
  j["seed"] = model.seed;
  j["rng_state"] = meta.rng_state;
  j["epoch"] = meta.epoch;
  j["losses"] = meta.losses;
  j["tensor_count"] = tensors.size();
  std::string json = j.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(json.size()));
  os.write(json.data(), static_cast<std::streamsize>(json.size()));
  for (auto& [name, t] : tensors) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t->rank()));
    for (int d = 0; d < t->rank(); ++d)
      write_u32(os, static_cast<std::uint32_t>(t->dim(d)));
    os.write(reinterpret_cast<const char*>(t->data()),
             static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!os) throw IoError("checkpoint write failed: " + path);
}

Model load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);

  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("not a checkpoint file (bad magic)");
  std::uint32_t version = read_u32(is);
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));

  std::uint32_t json_len = read_u32(is);
  std::string json(json_len, '\0');
  is.read(json.data(), json_len);
  if (!is) throw FormatError("checkpoint truncated");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata unreadable: ") +
                      e.what());
  }

  BackbonePreset preset;
  std::uint64_t seed = 0;
  bool with_projection = true;
  std::size_t tensor_count = 0;
  try {
    const auto& p = j.at("preset");
    preset.family = p.at("family").get<std::string>();
    preset.input_h = p.at("input_h").get<int>();
    preset.input_w = p.at("input_w").get<int>();
    preset.input_c = p.at("input_c").get<int>();
    preset.width_multiplier = p.at("width_multiplier").get<float>();
    preset.depth_multiplier = p.at("depth_multiplier").get<float>();
    preset.embedding_dim = p.at("embedding_dim").get<int>();
    with_projection = j.at("with_projection").get<bool>();
    seed = j.at("seed").get<std::uint64_t>();
    tensor_count = j.at("tensor_count").get<std::size_t>();
    if (meta) {
      meta->rng_state = j.at("rng_state").get<std::uint64_t>();
      meta->epoch = j.at("epoch").get<int>();
      meta->losses = j.at("losses").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata incomplete: ") +
                      e.what());
  }

  Model model = build_backbone(preset, seed, with_projection);
  auto tensors = model.named_tensors();
  if (tensors.size() != tensor_count)
    throw FormatError("checkpoint tensor count does not match its preset");

  for (auto& [name, t] : tensors) {
    std::uint32_t name_len = read_u32(is);
    std::string stored(name_len, '\0');
    is.read(stored.data(), name_len);
    if (!is) throw FormatError("checkpoint truncated");
    if (stored != name)
      throw FormatError("checkpoint tensor order mismatch: expected " + name +
                        ", found " + stored);
    std::uint32_t rank = read_u32(is);
    if (rank != static_cast<std::uint32_t>(t->rank()))
      throw FormatError("checkpoint tensor rank mismatch for " + name);
    for (int d = 0; d < t->rank(); ++d) {
      std::uint32_t dim = read_u32(is);
      if (dim != static_cast<std::uint32_t>(t->dim(d)))
        throw FormatError("checkpoint tensor shape mismatch for " + name);
    }
    is.read(reinterpret_cast<char*>(t->data()),
            static_cast<std::streamsize>(t->size() * sizeof(float)));
    if (!is) throw FormatError("checkpoint truncated");
  }
  return model;
}

}  // namespace labelforge
