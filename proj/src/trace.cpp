#include "rod/trace.hpp"

namespace rod {

namespace {
thread_local OpTraceScope* g_active = nullptr;
}

OpTraceScope::OpTraceScope() : previous_(g_active) { g_active = this; }

OpTraceScope::~OpTraceScope() { g_active = previous_; }

void OpTraceScope::record(std::string_view name, int64_t size) {
  ops_.emplace_back(std::string(name) + ':' + std::to_string(size));
}

void trace_op(std::string_view name, int64_t size) {
  if (g_active) g_active->record(name, size);
}

}  // namespace rod
