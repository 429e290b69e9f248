#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace xling::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kData = 2;
inline constexpr int kNumeric = 3;

// Runs one invocation (arguments without the program name) and returns the
// exit code. Reports go to the output directory; diagnostics go to `err`.
//
//   xling synth --seed N --out DIR [...]
//   xling eval --data DIR --out DIR [...]
//   xling align --manifest FILE --out DIR [...]
//   xling lens --data DIR --out DIR [...]
//   xling steer extract --data DIR --out DIR [...]
//   xling steer eval --data DIR --out DIR [...]
//   xling report --eval DIR --out DIR [...]
//   xling --replay DIR/run.json --out DIR
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xling::cli
