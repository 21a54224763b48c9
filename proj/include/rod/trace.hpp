#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rod {

// Records the sequence of kernels executed on the current thread while the
// scope is alive. Used by the benchmark to show two runs execute the same
// operation sequence.
class OpTraceScope {
 public:
  OpTraceScope();
  ~OpTraceScope();
  OpTraceScope(const OpTraceScope&) = delete;
  OpTraceScope& operator=(const OpTraceScope&) = delete;

  const std::vector<std::string>& ops() const noexcept { return ops_; }
  void record(std::string_view name, int64_t size);

 private:
  std::vector<std::string> ops_;
  OpTraceScope* previous_;
};

// No-op unless an OpTraceScope is active on this thread.
void trace_op(std::string_view name, int64_t size);

}  // namespace rod
