#ifndef EGOEQ_CLI_HPP
#define EGOEQ_CLI_HPP

#include <string>

#include "egoeq/config.hpp"

namespace egoeq {

// Command implementations; all outputs are pure functions of (config, input
// files). Paths may be relative. Exposed for in-process testing.
void cmd_gen_world(const RunConfig& cfg, const std::string& out_dir);
void cmd_mine(const RunConfig& cfg, const std::string& dataset_dir,
              const std::string& out_dir);
void cmd_train(const RunConfig& cfg, const std::string& dataset_dir,
               const std::string& patterns_path, const std::string& out_dir);
void cmd_eval(const RunConfig& cfg, const std::string& dataset_dir,
              const std::string& checkpoint_dir, const std::string& out_dir);
void cmd_nbv(const RunConfig& cfg, const std::string& dataset_dir,
             const std::string& checkpoint_dir, const std::string& out_dir);
void cmd_sweep(const RunConfig& cfg, const std::string& dataset_dir,
               const std::string& out_dir);
void cmd_gradcheck(const RunConfig& cfg, const std::string& out_dir);

// Full argv entry point. Exit codes: 0 success, 1 input/config error,
// 2 numeric failure; errors print one EGOEQ_ERROR[...] line on stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace egoeq

#endif
