// End-to-end tests of the command-line front end, run as a subprocess so the
// exit-code contract and the on-disk artifacts are what a user would see.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "csiva/cliops.hpp"

using namespace csiva;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Fresh scratch directory per test, cleaned on entry so reruns start blank.
class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("csiva_cli_") +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  CliResult run(const std::string& args) {
    fs::path so = dir_ / "stdout.txt", se = dir_ / "stderr.txt";
    std::string cmd = std::string(CSIVA_CLI_PATH) + " " + args + " > " + so.string() +
                      " 2> " + se.string();
    int rc = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = read_file(so);
    r.err = read_file(se);
    return r;
  }

  fs::path write(const std::string& name, const std::string& content) {
    fs::path p = dir_ / name;
    write_file_atomic(p, content);
    return p;
  }

  // Checkpoint whose decode head is pinned far negative, so every greedy
  // bit comes out absent no matter the input. Exercises plumbing without
  // needing a trained model.
  fs::path suppressed_ckpt(const std::string& name, int n_max, int k) {
    ModelConfig mc;
    mc.n_nodes_max = n_max;
    mc.hidden = 8;
    mc.encoder_layers = 2;
    mc.decoder_layers = 1;
    mc.heads = 2;
    mc.value_mlp_hidden = 4;
    mc.discrete = true;
    mc.k = k;
    CsivaModel<double> m(mc, 424242);
    m.params().find("dec.head.b")->w[0] = -12.0;
    fs::path p = dir_ / name;
    m.save(p);
    return p;
  }

  fs::path dir_;
};

const char* kTinyConfig =
    "[data]\n"
    "n_nodes=3\ner_degree=1\nfamily=dirichlet\nalpha=0.5\nk=2\n"
    "samples=12\nfraction=0.5\n"
    "[model]\n"
    "hidden=8\nencoder_layers=2\ndecoder_layers=1\nheads=2\nvalue_mlp_hidden=4\n"
    "[train]\n"
    "iterations=4\neval_every=2\neval_pairs=2\n"
    "[eval]\n"
    "pairs=3\n";

}  // namespace

TEST_F(Cli, GenerateWritesManifestedReproducibleDatasets) {
  fs::path cfg = write("gen.cfg",
                       "[data]\nn_nodes=4\ner_degree=1\nfamily=dirichlet\nalpha=0.5\n"
                       "k=3\nsamples=30\nfraction=0.5\n[generate]\ncount=2\n");
  CliResult r = run("generate --config " + cfg.string() + " --seed 5 --out " +
                    (dir_ / "g1").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("generate out="), std::string::npos);
  EXPECT_NE(r.out.find("datasets=2"), std::string::npos);

  std::string manifest = read_file(dir_ / "g1" / "MANIFEST");
  EXPECT_NE(manifest.find("run config="), std::string::npos);
  EXPECT_NE(manifest.find("seed=5"), std::string::npos);
  for (const char* name : {"dataset_000.txt", "dataset_001.txt"}) {
    std::string content = read_file(dir_ / "g1" / name);
    // The manifest hash and edge count must match an independent recount.
    std::string line = hex64(fnv1a64(content)) + " " + std::to_string(content.size()) +
                       " " + name;
    size_t at = manifest.find(line);
    ASSERT_NE(at, std::string::npos) << name;
    Dataset d = dataset_from_text(content);
    std::string edges = "edges=" + std::to_string(d.truth.edge_count());
    size_t eol = manifest.find('\n', at);
    EXPECT_NE(manifest.substr(at, eol - at).find(edges), std::string::npos);
  }

  // Same seed reruns byte-identical, a different seed does not.
  ASSERT_EQ(run("generate --config " + cfg.string() + " --seed 5 --out " +
                (dir_ / "g2").string())
                .code,
            0);
  EXPECT_EQ(read_file(dir_ / "g1" / "dataset_000.txt"),
            read_file(dir_ / "g2" / "dataset_000.txt"));
  EXPECT_EQ(read_file(dir_ / "g1" / "MANIFEST"), read_file(dir_ / "g2" / "MANIFEST"));
  ASSERT_EQ(run("generate --config " + cfg.string() + " --seed 6 --out " +
                (dir_ / "g3").string())
                .code,
            0);
  EXPECT_NE(read_file(dir_ / "g1" / "dataset_000.txt"),
            read_file(dir_ / "g3" / "dataset_000.txt"));
}

TEST_F(Cli, TrainEvalPredictPipeline) {
  fs::path cfg = write("tiny.cfg", kTinyConfig);
  CliResult tr = run("train --config " + cfg.string() + " --seed 9 --out " +
                     (dir_ / "run1").string());
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_NE(tr.out.find("iterations=4"), std::string::npos);
  for (const char* f : {"config.txt", "metrics.log", "model.ckpt", "MANIFEST"})
    EXPECT_TRUE(fs::exists(dir_ / "run1" / f)) << f;
  std::string metrics = read_file(dir_ / "run1" / "metrics.log");
  EXPECT_NE(metrics.find("iter=1 loss="), std::string::npos);
  EXPECT_NE(read_file(dir_ / "run1" / "config.txt").find("n_nodes=3"),
            std::string::npos);

  // The whole training run reproduces byte for byte from the same seed.
  ASSERT_EQ(run("train --config " + cfg.string() + " --seed 9 --out " +
                (dir_ / "run2").string())
                .code,
            0);
  EXPECT_EQ(metrics, read_file(dir_ / "run2" / "metrics.log"));
  EXPECT_EQ(read_file(dir_ / "run1" / "model.ckpt"),
            read_file(dir_ / "run2" / "model.ckpt"));

  CliResult ev = run("eval --config " + cfg.string() + " --seed 11 --ckpt " +
                     (dir_ / "run1" / "model.ckpt").string() + " --out " +
                     (dir_ / "report.txt").string());
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("mean="), std::string::npos);
  std::string rep = read_file(dir_ / "report.txt");
  for (int i = 0; i < 3; ++i)
    EXPECT_NE(rep.find("pair=" + std::to_string(i) + " hamming="), std::string::npos);
  EXPECT_NE(rep.find("cell=checkpointx"), std::string::npos);
  EXPECT_NE(rep.find("run config="), std::string::npos);

  ASSERT_EQ(run("generate --config " + cfg.string() + " --seed 21 --out " +
                (dir_ / "gd").string())
                .code,
            0);
  CliResult pr = run("predict --ckpt " + (dir_ / "run1" / "model.ckpt").string() +
                     " --dataset " + (dir_ / "gd" / "dataset_000.txt").string() +
                     " --out " + (dir_ / "pred.txt").string());
  ASSERT_EQ(pr.code, 0) << pr.err;
  EXPECT_NE(pr.out.find("predict out="), std::string::npos);
  EXPECT_NE(pr.out.find("n=3"), std::string::npos);
  std::string pred = read_file(dir_ / "pred.txt");
  EXPECT_NE(pred.find("loglik="), std::string::npos);
  EXPECT_NE(pred.find("probs"), std::string::npos);
  EXPECT_NE(pred.find("run ckpt="), std::string::npos);
}

TEST_F(Cli, SuppressedHeadPredictsNoEdges) {
  fs::path cfg = write("tiny.cfg", kTinyConfig);
  ASSERT_EQ(run("generate --config " + cfg.string() + " --seed 31 --out " +
                (dir_ / "gd").string())
                .code,
            0);
  fs::path ckpt = suppressed_ckpt("stub.ckpt", 3, 2);
  CliResult pr = run("predict --ckpt " + ckpt.string() + " --dataset " +
                     (dir_ / "gd" / "dataset_000.txt").string() + " --out " +
                     (dir_ / "pred.txt").string());
  ASSERT_EQ(pr.code, 0) << pr.err;
  EXPECT_NE(pr.out.find("edges=0"), std::string::npos);
  std::string pred = read_file(dir_ / "pred.txt");
  EXPECT_EQ(pred.rfind("3\n0 0 0\n0 0 0\n0 0 0\n", 0), 0u);
}

TEST_F(Cli, BenchBnlearnReportsAsiaStructure) {
  fs::path cfg = write("bench.cfg", "[data]\nsamples=60\nfraction=0.25\n");
  fs::path bif = fs::path(CSIVA_DATA_DIR) / "asia.bif";
  CliResult r = run("bench-bnlearn --bif " + bif.string() + " --config " + cfg.string() +
                    " --seed 3 --out " + (dir_ / "rep.txt").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("network=asia nodes=8 edges=8 warnings=0"), std::string::npos);
  std::string rep = read_file(dir_ / "rep.txt");
  EXPECT_NE(rep.find("samples=60"), std::string::npos);
  EXPECT_NE(rep.find("freq asia"), std::string::npos);
  EXPECT_NE(rep.find("freq dysp"), std::string::npos);
  EXPECT_NE(rep.find("truth\n8\n"), std::string::npos);
  EXPECT_NE(rep.find("run config="), std::string::npos);
  EXPECT_EQ(rep.find("hamming="), std::string::npos);  // no checkpoint given

  // With a no-edge checkpoint the Hamming distance is exactly the edge count.
  fs::path ckpt = suppressed_ckpt("stub8.ckpt", 8, 2);
  CliResult r2 = run("bench-bnlearn --bif " + bif.string() + " --config " + cfg.string() +
                     " --seed 3 --ckpt " + ckpt.string() + " --out " +
                     (dir_ / "rep2.txt").string());
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_NE(read_file(dir_ / "rep2.txt").find("hamming=8\n"), std::string::npos);
}

TEST_F(Cli, SweepCoversBothAxes) {
  fs::path ckpt = suppressed_ckpt("stub.ckpt", 3, 2);
  fs::path cfg = write("sweep.cfg",
                       "[data]\nn_nodes=3\ner_degree=1\nfamily=dirichlet\nalpha=0.5\n"
                       "k=2\nsamples=12\nfraction=0.5\n"
                       "[sweep]\nkind=interventions\nvalues=0,1\npairs=2\n");
  CliResult r = run("sweep --config " + cfg.string() + " --seed 13 --ckpt " +
                    ckpt.string() + " --out " + (dir_ / "iv.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("points=2"), std::string::npos);
  std::string csv = read_file(dir_ / "iv.csv");
  EXPECT_EQ(csv.rfind("fraction,mean,std,n\n", 0), 0u);
  EXPECT_NE(csv.find("# run config="), std::string::npos);

  fs::path cfg2 = write("sweep2.cfg",
                        "[data]\nn_nodes=3\ner_degree=1\nfamily=dirichlet\nalpha=0.5\n"
                        "k=2\nsamples=12\nfraction=0.5\n"
                        "[sweep]\nkind=samples\nvalues=5,10\npairs=2\n");
  CliResult r2 = run("sweep --config " + cfg2.string() + " --seed 13 --ckpt " +
                     ckpt.string() + " --out " + (dir_ / "sm.csv").string());
  ASSERT_EQ(r2.code, 0) << r2.err;
  std::string csv2 = read_file(dir_ / "sm.csv");
  EXPECT_EQ(csv2.rfind("samples,mean,std,n\n", 0), 0u);
  EXPECT_NE(csv2.find("\n5,"), std::string::npos);
  EXPECT_NE(csv2.find("\n10,"), std::string::npos);
}

TEST_F(Cli, ConfigMistakesExitThree) {
  fs::path bad_key = write("k.cfg", "[data]\nn_node=3\n");
  CliResult r = run("generate --config " + bad_key.string() + " --out " +
                    (dir_ / "o").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(r.err.rfind("error category=config", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("unknown key"), std::string::npos);

  fs::path bad_section = write("s.cfg", "[datum]\nn_nodes=3\n");
  EXPECT_EQ(run("generate --config " + bad_section.string() + " --out " +
                (dir_ / "o").string())
                .code,
            3);

  fs::path bad_value = write("v.cfg", "[train]\niterations=soon\n");
  EXPECT_EQ(run("train --config " + bad_value.string() + " --out " +
                (dir_ / "o").string())
                .code,
            3);
}

TEST_F(Cli, UsageMistakesExitTwo) {
  EXPECT_EQ(run("").code, 2);                       // no subcommand
  EXPECT_EQ(run("generate").code, 2);               // missing required --out
  EXPECT_EQ(run("generate --bogus x --out o").code, 2);
  EXPECT_EQ(run("--help").code, 0);                 // help is not an error
}

TEST_F(Cli, MissingFilesExitSix) {
  CliResult r = run("generate --config " + (dir_ / "absent.cfg").string() + " --out " +
                    (dir_ / "o").string());
  EXPECT_EQ(r.code, 6);
  EXPECT_EQ(r.err.rfind("error category=io", 0), 0u) << r.err;
  EXPECT_EQ(run("predict --ckpt " + (dir_ / "absent.ckpt").string() + " --dataset " +
                (dir_ / "absent.txt").string() + " --out " + (dir_ / "o").string())
                .code,
            6);
}

TEST_F(Cli, BrokenInputsExitByCategory) {
  // Syntax error in a reference network: parse, exit 5.
  fs::path bad_bif = write("bad.bif", "graph g {\n}\n");
  CliResult r5 = run("bench-bnlearn --bif " + bad_bif.string() + " --out " +
                     (dir_ / "o").string());
  EXPECT_EQ(r5.code, 5);
  EXPECT_EQ(r5.err.rfind("error category=parse", 0), 0u) << r5.err;

  // Well-formed network with a bad row sum: validation, exit 4.
  fs::path off_bif = write("off.bif",
                           "network off {\n}\nvariable a {\n  type discrete [ 2 ] "
                           "{ y, n };\n}\nprobability ( a ) {\n  table 0.5, 0.6;\n}\n");
  CliResult r4 = run("bench-bnlearn --bif " + off_bif.string() + " --out " +
                     (dir_ / "o").string());
  EXPECT_EQ(r4.code, 4);
  EXPECT_EQ(r4.err.rfind("error category=validation", 0), 0u) << r4.err;

  // Corrupt dataset file: validation, exit 4.
  fs::path bad_ds = write("bad.txt", "not a dataset\n");
  fs::path ckpt = suppressed_ckpt("stub.ckpt", 3, 2);
  CliResult rd = run("predict --ckpt " + ckpt.string() + " --dataset " +
                     bad_ds.string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(rd.code, 4);

  // Dataset wider than the checkpoint's node capacity: capability, exit 8.
  fs::path cfg = write("wide.cfg",
                       "[data]\nn_nodes=4\ner_degree=1\nfamily=dirichlet\nalpha=0.5\n"
                       "k=2\nsamples=10\nfraction=0.5\n");
  ASSERT_EQ(run("generate --config " + cfg.string() + " --seed 2 --out " +
                (dir_ / "gw").string())
                .code,
            0);
  CliResult r8 = run("predict --ckpt " + ckpt.string() + " --dataset " +
                     (dir_ / "gw" / "dataset_000.txt").string() + " --out " +
                     (dir_ / "o").string());
  EXPECT_EQ(r8.code, 8);
  EXPECT_EQ(r8.err.rfind("error category=capability", 0), 0u) << r8.err;
}
