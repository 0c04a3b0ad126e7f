#ifndef UNICLR_DETAIL_BINIO_HPP
#define UNICLR_DETAIL_BINIO_HPP

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "uniclr/errors.hpp"
#include "uniclr/matrix.hpp"

namespace uniclr::detail {

// All binary formats are little-endian float64/uint blobs; a big-endian host
// would need byte swapping that this build does not implement.
inline void require_little_endian() {
  require(std::endian::native == std::endian::little, ErrorKind::Contract,
          "binary checkpoint io requires a little-endian host");
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64s(std::ostream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p),
            static_cast<std::streamsize>(n * sizeof(double)));
}

class Reader {
 public:
  Reader(std::istream& in, std::string origin)
      : in_(in), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    std::uint32_t v = 0;
    raw(&v, sizeof v);
    return v;
  }

  std::uint64_t u64() {
    std::uint64_t v = 0;
    raw(&v, sizeof v);
    return v;
  }

  std::uint8_t u8() {
    std::uint8_t v = 0;
    raw(&v, sizeof v);
    return v;
  }

  void f64s(double* p, std::size_t n) { raw(p, n * sizeof(double)); }

  void raw(void* p, std::size_t n) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      raise(ErrorKind::Format, origin_ + ": truncated at byte " +
                                   std::to_string(offset_ +
                                                  static_cast<std::size_t>(in_.gcount())));
    offset_ += n;
  }

  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

  std::size_t offset() const { return offset_; }
  const std::string& origin() const { return origin_; }

 private:
  std::istream& in_;
  std::string origin_;
  std::size_t offset_ = 0;
};

}  // namespace uniclr::detail

#endif
