// Training through the generated C program: emit, compile, run, parse.

#include <filesystem>
#include <ostream>
#include <sstream>
#include <unistd.h>

#include "arrad/cnn.hpp"
#include "arrad/codegen_c.hpp"
#include "arrad/errors.hpp"

namespace arrad {

TrainingReport train_generated_c(const CnnConfig& cfg, const Dataset& train_set, const Dataset& test_set, std::ostream* log) {
  namespace fs = std::filesystem;
  fs::path dir = cfg.work_dir.empty()
                     ? fs::temp_directory_path() / ("arrad-train-" + std::to_string(::getpid()) + "-" + std::to_string(cfg.seed))
                     : fs::path(cfg.work_dir);
  fs::create_directories(dir);

  Chain c = build_cnn_chain();
  GradEnv g = chain_grad(c, cnn_seed(c), cfg.opt_passes, cfg.opt_passes).env;
  CToolchain tc;
  tc.cc = cfg.cc;
  fs::path exe = compile_c(tc, emit_training_program(c, g, cfg.opt_passes), dir, "cnn_train");

  write_idx((dir / "train-images.idx").string(), (dir / "train-labels.idx").string(), train_set.slice(0, cfg.train_images));
  write_idx((dir / "test-images.idx").string(), (dir / "test-labels.idx").string(), test_set);
  save_tensors((dir / "weights.bin").string(), weights_list(init_weights(cfg.seed)));

  std::ostringstream lr;
  lr.precision(17);
  lr << cfg.lr;
  std::string cmd = shell_quote(exe.string());
  for (const char* f : {"train-images.idx", "train-labels.idx", "test-images.idx", "test-labels.idx", "weights.bin"})
    cmd += " " + shell_quote((dir / f).string());
  cmd += " " + std::to_string(cfg.epochs) + " " + std::to_string(cfg.batch) + " " + std::to_string(cfg.train_images) + " " +
         std::to_string(test_set.size()) + " " + lr.str() + " " + shell_quote((dir / "grads.bin").string()) + " " +
         shell_quote((dir / "final.bin").string());
  std::string out;
  int rc = run_command(cmd, &out);
  if (rc != 0) throw Error("generated training program failed with status " + std::to_string(rc) + "\n" + out);

  TrainingReport rep;
  std::istringstream is(out);
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string w1, w2, w3;
    if (line.rfind("epoch ", 0) == 0) {
      EpochStats st;
      ls >> w1 >> st.epoch >> w2 >> st.loss >> w3 >> st.acc;
      if (!ls) throw Error("unparseable report line: " + line);
      rep.epochs.push_back(st);
      if (log) *log << format_report_line(st) << std::endl;
    } else if (line.rfind("test acc ", 0) == 0) {
      ls >> w1 >> w2 >> rep.test_acc;
    }
  }
  if (rep.epochs.size() != cfg.epochs) throw Error("generated training program reported " + std::to_string(rep.epochs.size()) + " epochs");
  if (cfg.epochs > 0) rep.first_batch_grads = load_tensors((dir / "grads.bin").string());
  rep.final_weights = weights_from_list(load_tensors((dir / "final.bin").string()));
  return rep;
}

}  // namespace arrad
