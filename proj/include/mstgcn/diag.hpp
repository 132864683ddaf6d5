#pragma once

#include <functional>
#include <string>
#include <vector>

namespace mstgcn::diag {

// Non-fatal diagnostics (degenerate graphs, absent classes, ...).
// The default handler prints to stderr; tests install a collector.
using WarnHandler = std::function<void(const std::string&)>;

void warn(const std::string& message);
void set_warn_handler(WarnHandler handler);
void reset_warn_handler();

// RAII collector used by tests to assert that a warning fired.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(const std::string& needle) const;

 private:
  std::vector<std::string> messages_;
};

}  // namespace mstgcn::diag
