#include "mhf/checkpoint.hpp"

#include <fstream>

#include <fmt/format.h>

namespace mhf {

namespace {
constexpr char kMagic[8] = {'M', 'H', 'F', 'C', 'K', 'P', 'T', '1'};
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write checkpoint {}", path.string()));
    std::string header = ckpt.header.dump();
    std::uint64_t hlen = header.size(), plen = ckpt.payload.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header.data(), static_cast<std::streamsize>(hlen));
    out.write(reinterpret_cast<const char*>(&plen), sizeof(plen));
    out.write(ckpt.payload.data(), static_cast<std::streamsize>(plen));
    if (!out) throw Error(fmt::format("write to {} failed", path.string()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open checkpoint {}", path.string()));
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(fmt::format("{} is not a checkpoint file", path.string()));
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  std::uint64_t plen = 0;
  in.read(reinterpret_cast<char*>(&plen), sizeof(plen));
  Checkpoint ckpt;
  ckpt.payload.resize(plen);
  in.read(ckpt.payload.data(), static_cast<std::streamsize>(plen));
  if (!in) throw Error(fmt::format("checkpoint {} is truncated", path.string()));
  ckpt.header = nlohmann::json::parse(header);
  return ckpt;
}

}  // namespace mhf
