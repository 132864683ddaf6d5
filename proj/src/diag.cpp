#include "mstgcn/diag.hpp"

#include <cstdio>

namespace mstgcn::diag {

namespace {

void default_handler(const std::string& message) {
  std::fprintf(stderr, "warning: %s\n", message.c_str());
}

WarnHandler& handler() {
  static WarnHandler h = default_handler;
  return h;
}

}  // namespace

void warn(const std::string& message) { handler()(message); }

void set_warn_handler(WarnHandler h) { handler() = std::move(h); }

void reset_warn_handler() { handler() = default_handler; }

WarningCapture::WarningCapture() {
  set_warn_handler([this](const std::string& m) { messages_.push_back(m); });
}

WarningCapture::~WarningCapture() { reset_warn_handler(); }

bool WarningCapture::contains(const std::string& needle) const {
  for (const auto& m : messages_) {
    if (m.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace mstgcn::diag
