#ifndef UNICLR_ERRORS_HPP
#define UNICLR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace uniclr {

// Every failure the library can raise carries one of these kinds. The CLI
// maps kinds onto process exit codes; see exit_code_for().
enum class ErrorKind {
  Dimension,     // shape mismatch between operands
  Degenerate,    // empty matrix, zero-width batch, and similar
  IndexRange,    // out-of-range row/column/label index
  Contract,      // caller violated a documented precondition
  Conditioning,  // factorization failed (non positive definite input)
  Numeric,       // non-finite values where finite ones are required
  Config,        // bad configuration file or option value
  Format,        // malformed file contents (CSV, IDX, checkpoint, metrics)
  Data,          // dataset-level violation (label range, count mismatch)
  Io,            // missing or unreadable/unwritable file
  Divergence,    // training produced a non-finite loss
  Audit,         // gradient audit exceeded its tolerance
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Exit contract: 0 success, 2 config/format trouble, 3 divergence,
// 4 I/O trouble, 5 failed gradient audit.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
      return 4;
    case ErrorKind::Divergence:
      return 3;
    case ErrorKind::Audit:
      return 5;
    default:
      return 2;
  }
}

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool cond, ErrorKind kind, const std::string& message) {
  if (!cond) raise(kind, message);
}

}  // namespace uniclr

#endif
