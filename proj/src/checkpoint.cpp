#include "smallseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace smallseg::ckpt {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'E', 'G', 'C', 'K', 'P', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}

std::uint64_t get_u64(std::istream& is) {
  char buf[8];
  is.read(buf, 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::string& config_json,
                      const ag::ParamStore& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, 8);
  put_u64(os, config_json.size());
  os.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
  put_u64(os, store.all().size());
  for (const auto& p : store.all()) {
    put_u64(os, p->name.size());
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    os.put(p->learnable ? 1 : 0);
    put_u64(os, static_cast<std::uint64_t>(p->value.ndim()));
    for (int d = 0; d < p->value.ndim(); ++d)
      put_u64(os, static_cast<std::uint64_t>(p->value.dim(d)));
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.numel() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Loaded read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  Loaded out;
  const std::uint64_t json_len = get_u64(is);
  out.config_json.resize(json_len);
  is.read(out.config_json.data(), static_cast<std::streamsize>(json_len));
  const std::uint64_t n = get_u64(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t name_len = get_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    is.get();  // learnable flag, implied by the model structure on restore
    const std::uint64_t ndim = get_u64(is);
    std::vector<i64> shape;
    for (std::uint64_t d = 0; d < ndim; ++d) shape.push_back(static_cast<i64>(get_u64(is)));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
    out.tensors.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void restore(const Loaded& loaded, ag::ParamStore& store) {
  size_t used = 0;
  for (const auto& [name, tensor] : loaded.tensors) {
    ag::Parameter* p = store.find(name);
    if (!p) throw std::runtime_error("checkpoint: unknown parameter " + name);
    if (p->value.shape() != tensor.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    p->value = tensor;
    ++used;
  }
  if (used != store.all().size())
    throw std::runtime_error("checkpoint: missing parameters (model/config mismatch)");
}

}  // namespace smallseg::ckpt
