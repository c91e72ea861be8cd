// SPDX-License-Identifier: Apache-2.0
#include "ddnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace ddnet {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'D', 'D', 'N', 'E', 'T', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json config_to_json(const ModelConfig& c) {
  return {{"base_channels", c.base_channels}, {"num_scales", c.num_scales}, {"use_sam", c.use_sam},
          {"use_scm", c.use_scm},             {"use_gem", c.use_gem},       {"use_cem", c.use_cem},
          {"prelu_init", c.prelu_init}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.base_channels = j.at("base_channels").get<int>();
  c.num_scales = j.at("num_scales").get<int>();
  c.use_sam = j.at("use_sam").get<bool>();
  c.use_scm = j.at("use_scm").get<bool>();
  c.use_gem = j.at("use_gem").get<bool>();
  c.use_cem = j.at("use_cem").get<bool>();
  c.prelu_init = j.at("prelu_init").get<float>();
  return c;
}

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T read_raw(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) fail(ErrorKind::checkpoint, path.string() + ": truncated checkpoint");
  return value;
}

void write_matrix(std::ostream& out, const RowMatrix<float>& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
}

void read_matrix(std::istream& in, RowMatrix<float>& m, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  if (!in) fail(ErrorKind::checkpoint, path.string() + ": truncated parameter data");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, std::int64_t step, int epoch,
                     const AdamState* adam) {
  json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = config_to_json(model.config());
  header["seed"] = model.seed();
  header["step"] = step;
  header["epoch"] = epoch;
  header["adam"] = adam != nullptr;
  json table = json::array();
  for (const auto& p : model.parameters())
    table.push_back({{"name", p.name},
                     {"shape", p.shape},
                     {"init", std::string(to_string(p.init))},
                     {"rows", p.value.rows()},
                     {"cols", p.value.cols()}});
  header["parameters"] = std::move(table);
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    write_raw(out, kCheckpointVersion);
    write_raw(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : model.parameters()) write_matrix(out, p.value);
    if (adam) {
      for (const auto& m : adam->first) write_matrix(out, m);
      for (const auto& m : adam->second) write_matrix(out, m);
    }
    if (!out) fail(ErrorKind::io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::checkpoint, "cannot open checkpoint " + path.string());
  char magic[sizeof kMagic] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    fail(ErrorKind::checkpoint, path.string() + ": not a DDNet checkpoint");
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    fail(ErrorKind::checkpoint, path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto length = read_raw<std::uint64_t>(in, path);
  if (length > (1u << 26)) fail(ErrorKind::checkpoint, path.string() + ": implausible header length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) fail(ErrorKind::checkpoint, path.string() + ": truncated header");

  json header;
  try {
    header = json::parse(text);
    ModelConfig config = config_from_json(header.at("config"));
    Checkpoint ck{Model(config, header.at("seed").get<std::uint64_t>()), header.at("step").get<std::int64_t>(),
                  header.at("epoch").get<int>(), std::nullopt};
    auto& params = ck.model.parameters();
    const auto& table = header.at("parameters");
    if (static_cast<int>(table.size()) != params.size())
      fail(ErrorKind::checkpoint, path.string() + ": parameter table does not match the configured architecture");
    for (int i = 0; i < params.size(); ++i) {
      const auto& row = table[i];
      if (row.at("name").get<std::string>() != params[i].name || row.at("rows").get<Eigen::Index>() != params[i].value.rows() ||
          row.at("cols").get<Eigen::Index>() != params[i].value.cols())
        fail(ErrorKind::checkpoint, path.string() + ": parameter '" + row.at("name").get<std::string>() +
                                        "' does not match the architecture");
      read_matrix(in, params[i].value, path);
    }
    if (header.at("adam").get<bool>()) {
      AdamState adam = AdamState::zeros_like(params);
      for (auto& m : adam.first) read_matrix(in, m, path);
      for (auto& m : adam.second) read_matrix(in, m, path);
      ck.adam = std::move(adam);
    }
    if (in.peek() != std::char_traits<char>::eof())
      fail(ErrorKind::checkpoint, path.string() + ": trailing bytes after parameter data");
    return ck;
  } catch (const json::exception& e) {
    fail(ErrorKind::checkpoint, path.string() + ": malformed header: " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::checkpoint) throw;
    fail(ErrorKind::checkpoint, path.string() + ": " + e.what());
  }
}

}  // namespace ddnet
