#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "gat/errors.hpp"

// Batch commands behind the `gat` executable. Each command reads a JSON
// config, writes CSV tables plus a `<command>.meta.json` sidecar into the
// output directory and returns an exit code.
namespace gat::cli {

/// 0 success, 1 the analysis flagged arbitrage or a mismatch, 2 usage or
/// module error.
enum ExitCode : int { kOk = 0, kFlagged = 1, kUsage = 2 };

/// Config or command-line problem; always exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Failure inside a wrapped module; the message starts with the module name.
class ModuleError : public Error {
 public:
  ModuleError(const std::string& module, const std::string& what) : Error(module + ": " + what), module_(module) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

struct Invocation {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

int cmd_check_zc(const Invocation& inv, std::ostream& log);
int cmd_price(const Invocation& inv, std::ostream& log);
int cmd_solve_pde(const Invocation& inv, std::ostream& log);
int cmd_compare(const Invocation& inv, std::ostream& log);
int cmd_simulate(const Invocation& inv, std::ostream& log);

/// Parses argv and dispatches; never throws.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace gat::cli
