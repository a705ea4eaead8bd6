// Command-line entry point: dump, gradcheck, emit-c, train, synth.
// Exit codes: 0 ok, 1 check/input failure, 2 extraction failure,
// 3 environment failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "arrad/chain.hpp"
#include "arrad/cnn.hpp"
#include "arrad/codegen_c.hpp"
#include "arrad/errors.hpp"
#include "arrad/gradcheck.hpp"

using namespace arrad;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
  if (!os) throw IoError("write failed: " + path);
}

// Adjoint seed for a generic chain: the all-ones array, so each base
// adjoint is the gradient of the sum of the final binding's elements.
Expr unit_seed(const Chain& c) {
  Ctx full = c.full_ctx();
  return one(full, full.at(0).shape);
}

void warn_unused(const Chain& c) {
  for (const std::string& n : c.unused_bindings()) std::cerr << "warning: binding " << n << " is never used\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Array-language AD toolkit: dump, gradient checks, C emission, CNN training"};
  app.require_subcommand(1);

  auto* dump = app.add_subcommand("dump", "Print an expression or chain in its text form");
  std::string dump_expr, dump_chain;
  bool dump_cnn = false;
  auto* o_expr = dump->add_option("--expr", dump_expr, "Expression file")->check(CLI::ExistingFile);
  auto* o_chain = dump->add_option("--chain", dump_chain, "Chain file")->check(CLI::ExistingFile);
  auto* o_cnn = dump->add_flag("--cnn", dump_cnn, "The built-in CNN chain");
  o_expr->excludes(o_chain)->excludes(o_cnn);
  o_chain->excludes(o_cnn);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of reverse-mode adjoints");
  std::uint64_t gc_seed = 1;
  std::size_t gc_cases = 100;
  bool gc_cnn = false;
  gc->add_option("--seed", gc_seed, "Random seed")->capture_default_str();
  gc->add_option("--cases", gc_cases, "Number of random terms")->capture_default_str();
  gc->add_flag("--cnn", gc_cnn, "Check 5 whole-model weight coordinates instead");

  auto* emit = app.add_subcommand("emit-c", "Emit C for a chain");
  std::string emit_chain_file, emit_out;
  bool emit_cnn = false;
  std::size_t emit_passes = 10;
  auto* e_cnn = emit->add_flag("--cnn", emit_cnn, "The built-in CNN: step function plus training harness");
  auto* e_chain = emit->add_option("--chain", emit_chain_file, "Chain file: step function plus dump-file runner")
                      ->check(CLI::ExistingFile);
  e_cnn->excludes(e_chain);
  emit->add_option("--out", emit_out, "Output C file")->required();
  emit->add_option("--opt-passes", emit_passes, "Optimizer passes")->capture_default_str();

  auto* tr = app.add_subcommand("train", "Train the CNN on IDX data");
  std::string images, labels, test_images, test_labels, backend = "interpreter", cc_flag, work_dir;
  CnnConfig cfg;
  std::size_t train_count = 0, holdout = 200;
  tr->add_option("--images", images, "Training images (IDX)")->required()->check(CLI::ExistingFile);
  tr->add_option("--labels", labels, "Training labels (IDX)")->required()->check(CLI::ExistingFile);
  auto* t_ti = tr->add_option("--test-images", test_images, "Test images (IDX)")->check(CLI::ExistingFile);
  auto* t_tl = tr->add_option("--test-labels", test_labels, "Test labels (IDX)")->check(CLI::ExistingFile);
  t_ti->needs(t_tl);
  t_tl->needs(t_ti);
  tr->add_option("--train-count", train_count, "Training images used (default: all not held out)");
  tr->add_option("--holdout", holdout, "Without test files, hold out this many trailing images")->capture_default_str();
  tr->add_option("--epochs", cfg.epochs)->capture_default_str();
  tr->add_option("--batch", cfg.batch)->capture_default_str();
  tr->add_option("--lr", cfg.lr)->capture_default_str();
  tr->add_option("--seed", cfg.seed, "Weight initialization seed")->capture_default_str();
  tr->add_option("--backend", backend)->check(CLI::IsMember({"interpreter", "c"}))->capture_default_str();
  tr->add_option("--cc", cc_flag, "C compiler (default: $CC, else cc)");
  tr->add_option("--work-dir", work_dir, "Scratch directory for the C backend");

  auto* syn = app.add_subcommand("synth", "Write synthetic digits as IDX files");
  std::string syn_images, syn_labels;
  std::size_t syn_count = 1200;
  std::uint64_t syn_seed = 42;
  syn->add_option("--images", syn_images)->required();
  syn->add_option("--labels", syn_labels)->required();
  syn->add_option("--count", syn_count)->capture_default_str();
  syn->add_option("--seed", syn_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*dump) {
      if (dump_cnn) {
        Chain c = build_cnn_chain();
        warn_unused(c);
        std::cout << chain_dump(c);
      } else if (!dump_chain.empty()) {
        Chain c = parse_chain(read_file(dump_chain));
        warn_unused(c);
        std::cout << chain_dump(c);
      } else if (!dump_expr.empty()) {
        std::cout << expr_file_text(parse_expr_file(read_file(dump_expr))) << "\n";
      } else {
        std::cerr << "dump: one of --expr, --chain, --cnn is required\n";
        return 1;
      }
      return 0;
    }

    if (*gc) {
      if (gc_cnn) {
        bool ok = true;
        double worst = 0.0;
        for (const CnnCoordinate& c : gradcheck_cnn(gc_seed)) {
          std::printf("%s[%zu] ad %.10e fd %.10e rel %.3e %s\n", c.weight.c_str(), c.offset, c.ad, c.fd, c.rel,
                      c.pass ? "ok" : "FAIL");
          ok = ok && c.pass;
          worst = std::max(worst, c.rel);
        }
        std::printf("worst relative error %.3e\n", worst);
        return ok ? 0 : 1;
      }
      GradcheckReport rep = gradcheck_random(gc_seed, gc_cases);
      for (std::size_t n = 0; n < rep.cases.size(); ++n) {
        const GradcheckCase& c = rep.cases[n];
        if (c.pass) continue;
        std::printf("case %zu FAIL rel %.3e abs %.3e\n%s\n", n, c.worst_rel, c.worst_abs, c.term.c_str());
      }
      std::printf("cases %zu failures %zu constructors %zu\n", rep.cases.size(), rep.failures, rep.coverage.size());
      std::printf("worst relative error %.3e\n", rep.worst_rel);
      return rep.failures == 0 ? 0 : 1;
    }

    if (*emit) {
      std::string src;
      if (emit_cnn) {
        Chain c = build_cnn_chain();
        GradEnv g = chain_grad(c, cnn_seed(c), emit_passes, emit_passes).env;
        src = emit_training_program(c, g, emit_passes);
      } else if (!emit_chain_file.empty()) {
        Chain c = parse_chain(read_file(emit_chain_file));
        warn_unused(c);
        GradEnv g = chain_grad(c, unit_seed(c), emit_passes, emit_passes).env;
        src = emit_chain_program(c, g, emit_passes);
      } else {
        std::cerr << "emit-c: one of --cnn, --chain is required\n";
        return 1;
      }
      write_file(emit_out, src);
      return 0;
    }

    if (*tr) {
      Dataset all = load_idx(images, labels);
      Dataset train_set, test_set;
      if (!test_images.empty()) {
        train_set = all;
        test_set = load_idx(test_images, test_labels);
      } else {
        if (holdout >= all.size()) throw Error("--holdout leaves no training images");
        train_set = all.slice(0, all.size() - holdout);
        test_set = all.slice(all.size() - holdout, holdout);
      }
      cfg.train_images = train_count ? train_count : train_set.size();
      if (backend == "c") {
        cfg.backend = Backend::GeneratedC;
        cfg.cc = resolve_cc(cc_flag);
        check_cc(cfg.cc);
        cfg.work_dir = work_dir;
      }
      TrainingReport rep = train(cfg, train_set, test_set, &std::cout);
      std::printf("test acc %.4f\n", rep.test_acc);
      return 0;
    }

    if (*syn) {
      write_idx(syn_images, syn_labels, synth_digits(syn_count, syn_seed));
      return 0;
    }
  } catch (const ExtractionFailure& e) {
    std::cerr << "extraction failure: " << e.what() << "\n";
    return 2;
  } catch (const EnvironmentError& e) {
    std::cerr << "environment: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
