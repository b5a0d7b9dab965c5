#include "speechface/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace speechface {

namespace {

constexpr char kMagic[8] = {'S', 'F', 'C', 'H', 'K', 'P', 'T', '\0'};
constexpr int kFormatVersion = 1;

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const std::map<std::string, std::string>& config,
                     const NamedConstTensors& tensors) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["kind"] = kind;
  header["config"] = config;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    manifest.push_back({{"name", name}, {"shape", t->shape()}});
  }
  header["tensors"] = manifest;
  const std::string htext = header.dump();

  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  f.write(kMagic, sizeof(kMagic));
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, t] : tensors) {
    f.write(reinterpret_cast<const char*>(t->data()),
            static_cast<std::streamsize>(t->size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  std::uint32_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  f.read(htext.data(), hlen);
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path.string());

  nlohmann::json header = nlohmann::json::parse(htext);
  if (header.at("format_version").get<int>() != kFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format version in " + path.string());
  }
  Checkpoint ck;
  ck.kind = header.at("kind").get<std::string>();
  if (header.contains("config")) {
    ck.config = header.at("config").get<std::map<std::string, std::string>>();
  }
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw std::runtime_error("truncated checkpoint payload: " + path.string());
    ck.tensors.emplace_back(name, std::move(t));
  }
  return ck;
}

}  // namespace speechface
