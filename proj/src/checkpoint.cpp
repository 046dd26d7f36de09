#include "pepco/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "pepco/data.hpp"
#include "pepco/error.hpp"

namespace pepco::ad {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'N', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t uint(std::size_t width) {
    need(width);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += width;
    return v;
  }

  double f64() { return std::bit_cast<double>(uint(8)); }

  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<const Param*>& params) {
  std::string out(kMagic, sizeof kMagic);
  for (const Param* p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t e : p->value.shape()) put_le<std::uint64_t>(out, e);
    for (double v : p->value.values()) put_le<double>(out, v);
  }
  return out;
}

std::vector<Param> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("not a parameter checkpoint (missing PCN1 magic)");
  }
  Reader in(bytes);
  in.text(4);
  std::vector<Param> params;
  while (!in.done()) {
    const auto name_len = in.uint(4);
    std::string name = in.text(name_len);
    const auto rank = in.uint(4);
    if (rank > 8) throw ParseError("checkpoint entry '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape;
    std::size_t count = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
      shape.push_back(in.uint(8));
      count *= shape.back();
    }
    if (count > bytes.size()) throw ParseError("checkpoint entry '" + name + "' larger than file");
    std::vector<double> values(count);
    for (double& v : values) v = in.f64();
    params.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Param*>& params) {
  data::write_file(path, encode_checkpoint(params));
}

std::vector<Param> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(data::read_file(path));
}

}  // namespace pepco::ad
