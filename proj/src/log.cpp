#include "rtslab/log.hpp"

#include <iostream>
#include <utility>

namespace rtslab {

namespace {
WarningSink& sink() {
  static WarningSink s;
  return s;
}
}  // namespace

void warn(std::string_view message) {
  if (sink()) {
    sink()(message);
    return;
  }
  std::cerr << "warning: " << message << '\n';
}

WarningSink set_warning_sink(WarningSink s) { return std::exchange(sink(), std::move(s)); }

}  // namespace rtslab
