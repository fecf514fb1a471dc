#include "spkseq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "spkseq/config.hpp"
#include "spkseq/error.hpp"

namespace spkseq::ckpt {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'K', 'S', 'E', 'Q', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t digest(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

Checkpoint capture(const net::Model& model) {
  Checkpoint c;
  c.config_text = model.config().canonical();
  c.digest = digest(c.config_text);
  auto add = [&](const std::vector<net::NamedTensor>& list) {
    for (const auto& nt : list) {
      auto d = nt.tensor.data();
      c.records.push_back({nt.name, nt.tensor.shape(), std::vector<double>(d.begin(), d.end())});
    }
  };
  add(model.parameters());
  add(model.buffers());
  return c;
}

void write(const std::string& path, const Checkpoint& ckpt) {
  std::string buf(kMagic, sizeof(kMagic));
  put<std::uint64_t>(buf, ckpt.digest);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(ckpt.config_text.size()));
  buf += ckpt.config_text;
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& r : ckpt.records) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(r.name.size()));
    buf += r.name;
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) put<std::uint64_t>(buf, d);
    for (double v : r.values) put<double>(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write failed for " + path);
}

Checkpoint read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError(path + ": not a checkpoint (bad magic)");
  }
  Checkpoint c;
  c.digest = r.get<std::uint64_t>();
  c.config_text = r.bytes(r.get<std::uint32_t>());
  if (digest(c.config_text) != c.digest) {
    throw DigestMismatch(path + ": embedded configuration does not match its digest");
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    rec.name = r.bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError(path + ": implausible rank for " + rec.name);
    for (std::uint32_t k = 0; k < rank; ++k) rec.shape.push_back(r.get<std::uint64_t>());
    const auto n = shape_numel(rec.shape);
    rec.values.resize(n);
    for (auto& v : rec.values) v = r.get<double>();
    c.records.push_back(std::move(rec));
  }
  if (!r.done()) throw FormatError(path + ": trailing bytes");
  return c;
}

void save(const std::string& path, const net::Model& model) { write(path, capture(model)); }

void restore(net::Model& model, const Checkpoint& ckpt) {
  if (digest(model.config().canonical()) != ckpt.digest) {
    throw DigestMismatch("checkpoint was written for a different model configuration");
  }
  std::map<std::string, const Record*> by_name;
  for (const auto& r : ckpt.records) by_name[r.name] = &r;
  auto fill = [&](const std::vector<net::NamedTensor>& list) {
    for (const auto& nt : list) {
      auto it = by_name.find(nt.name);
      if (it == by_name.end()) throw FormatError("checkpoint lacks tensor " + nt.name);
      if (it->second->shape != nt.tensor.shape()) {
        throw FormatError("tensor " + nt.name + " has shape " + shape_str(it->second->shape) + ", expected " +
                          shape_str(nt.tensor.shape()));
      }
      Tensor target = nt.tensor;
      auto dst = target.data();
      std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
    }
  };
  fill(model.parameters());
  fill(model.buffers());
}

net::Model load(const std::string& path) {
  Checkpoint c = read(path);
  net::Model model(parse_model_config(c.config_text), 0);
  restore(model, c);
  return model;
}

}  // namespace spkseq::ckpt
