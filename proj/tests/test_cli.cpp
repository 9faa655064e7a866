#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run(const std::string& args) {
    std::string cmd = std::string(SUSEG_CLI_PATH) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::string out;
    std::array<char, 512> buf;
    while (fgets(buf.data(), buf.size(), p)) out += buf.data();
    int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path tmpdir(const char* leaf) {
    fs::path d = fs::temp_directory_path() / leaf;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

} // namespace

TEST_CASE("no subcommand and unknown flags exit 1 with usage text") {
    RunResult none = run("");
    CHECK(none.exit_code == 1);

    RunResult bad = run("--frobnicate");
    CHECK(bad.exit_code == 1);

    RunResult help = run("--help");
    CHECK(help.exit_code == 0);
    CHECK(help.output.find("gen-phantom") != std::string::npos);
    CHECK(help.output.find("cross-validate") != std::string::npos);
}

TEST_CASE("gen-phantom writes volumes and a manifest") {
    fs::path out = tmpdir("suseg_cli_gen");
    RunResult r = run("gen-phantom --count 2 --seed 5 --set shape=40 --out " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(out / "manifest.json"));
    CHECK(fs::exists(out / "phantom_000_ct.nii.gz"));
    CHECK(fs::exists(out / "phantom_000_gt.nii.gz"));
    CHECK(fs::exists(out / "phantom_001_ct.nii.gz"));
}

TEST_CASE("unknown override key exits 1") {
    fs::path out = tmpdir("suseg_cli_badset");
    RunResult r = run("gen-phantom --count 1 --set bogus_knob=3 --out " + out.string());
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("bogus_knob") != std::string::npos);

    RunResult r2 = run("cross-validate --manifest /dev/null --set flods=2");
    CHECK(r2.exit_code == 1);
}

TEST_CASE("missing data exits 2") {
    RunResult r = run("train-isnet --manifest /no/such/manifest.json --scale 48x16");
    CHECK(r.exit_code == 2);
}

TEST_CASE("predict on a generated phantom writes a prediction and overlays") {
    fs::path data = tmpdir("suseg_cli_pred_data");
    REQUIRE(run("gen-phantom --count 1 --seed 8 --set shape=40 --out " + data.string()).exit_code ==
            0);

    fs::path rundir = tmpdir("suseg_cli_pred_run");
    std::string common = " --run-dir " + rundir.string() +
                         " --set scales=40x16 --set isnet.levels=2 --set isnet.base_channels=2 "
                         "--set isnet.epochs=0 --set patches_per_volume=2 --set isnet.minibatch=2";
    RunResult tr = run("train-isnet --manifest " + (data / "manifest.json").string() +
                       " --scale 40x16" + common);
    CHECK(tr.exit_code == 0);
    fs::path ckpt = rundir / "isnet_v40_p16.ckpt";
    REQUIRE(fs::exists(ckpt));

    fs::path pred = rundir / "pred.nii.gz";
    RunResult pr = run("predict --model " + ckpt.string() + " --ct " +
                       (data / "phantom_000_ct.nii.gz").string() + " --out " + pred.string() +
                       common);
    CHECK(pr.exit_code == 0);
    CHECK(fs::exists(pred));
}
