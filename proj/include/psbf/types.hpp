#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace psbf {

/// A model is structurally broken (bad declarations, malformed tables, ...).
struct ModelError : std::runtime_error {
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

/// An operation was asked to enumerate past its configured feasibility cap.
struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

/// A belief update lost all probability mass; the observation is impossible
/// under the prior, which indicates an inconsistent model/observation pair.
struct ZeroMassError : std::runtime_error {
  explicit ZeroMassError(const std::string& what) : std::runtime_error(what) {}
};

using Value = int;
/// Fixed-length value tuple over the state variables, in index order.
using StateTuple = std::vector<Value>;
/// Fixed-length value tuple over the observation variables, in index order.
using ObsTuple = std::vector<Value>;

enum class VarKind { State, Obs };

struct VariableDecl {
  int id = 0;  // 1-based, as written in process files
  VarKind kind = VarKind::State;
  int domain_size = 0;
};

/// Mixed-radix codec for value tuples. The first variable in the dimension
/// list is the most significant digit, matching the row-major table layout
/// used by the process file format.
class Indexer {
 public:
  Indexer() = default;

  static Indexer over(std::vector<int> dims) {
    Indexer ix;
    ix.dims_ = std::move(dims);
    ix.stride_.assign(ix.dims_.size(), 1);
    std::size_t sz = 1;
    for (std::size_t i = ix.dims_.size(); i-- > 0;) {
      ix.stride_[i] = sz;
      if (ix.dims_[i] <= 0) throw ModelError("Indexer: nonpositive dimension");
      if (sz > (std::size_t(1) << 62) / std::size_t(ix.dims_[i]))
        throw InfeasibleError("Indexer: joint domain overflows");
      sz *= std::size_t(ix.dims_[i]);
    }
    ix.size_ = sz;
    return ix;
  }

  std::size_t size() const { return size_; }
  std::size_t rank() const { return dims_.size(); }
  const std::vector<int>& dims() const { return dims_; }

  std::size_t index(const std::vector<Value>& tuple) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) idx += stride_[i] * std::size_t(tuple[i]);
    return idx;
  }

  void decode(std::size_t idx, std::vector<Value>& out) const {
    out.resize(dims_.size());
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      out[i] = Value(idx / stride_[i]);
      idx %= stride_[i];
    }
  }

  std::vector<Value> decode(std::size_t idx) const {
    std::vector<Value> out;
    decode(idx, out);
    return out;
  }

  /// Stride of digit i (distance between consecutive values of that digit).
  std::size_t stride(std::size_t i) const { return stride_[i]; }

 private:
  std::vector<int> dims_;
  std::vector<std::size_t> stride_;
  std::size_t size_ = 1;
};

}  // namespace psbf
