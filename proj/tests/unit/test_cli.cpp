#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

// end-to-end checks of the experiment driver: exit codes, file outputs and
// byte-identical reruns

static int run(const std::string& args) {
    std::string cmd = std::string(DYAD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

static std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

static void write_config(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

TEST_CASE("config errors exit with code 2") {
    CHECK(run("pi-good --config /nonexistent.json") == 2);
    write_config("/tmp/dyad_bad.json", "{\"no_such_key\": 1}");
    CHECK(run("pi-good --config /tmp/dyad_bad.json") == 2);
    write_config("/tmp/dyad_badkernel.json", "{\"kernel\": \"nope\", \"grid\": {\"L\": 4}}");
    CHECK(run("decompose --config /tmp/dyad_badkernel.json --out /tmp/dyad_badk_out") == 2);
}

TEST_CASE("pi-good runs and is deterministic") {
    write_config("/tmp/dyad_pg.json",
                 "{\"grid\": {\"n\":1, \"L\":8, \"S\":0, \"r\":4, \"alpha\":1.0}, \"trials\": 400}");
    CHECK(run("pi-good --config /tmp/dyad_pg.json --out /tmp/dyad_pg1 --seed 11") == 0);
    CHECK(run("pi-good --config /tmp/dyad_pg.json --out /tmp/dyad_pg2 --seed 11") == 0);
    CHECK(slurp("/tmp/dyad_pg1/pi_good.csv") == slurp("/tmp/dyad_pg2/pi_good.csv"));
    CHECK(!slurp("/tmp/dyad_pg1/manifest.json").empty());
}

TEST_CASE("decompose: zero kernel config gives an all-zero report, rerun identical") {
    write_config("/tmp/dyad_dz.json",
                 "{\"kernel\":\"zero\", \"grid\": {\"L\": 4}, \"corpus\": {\"seed\": 3, \"count\": 2},"
                 " \"trunc\": {\"kind\":\"smooth\", \"eps\": 0.25}}");
    CHECK(run("decompose --config /tmp/dyad_dz.json --out /tmp/dyad_dz1") == 0);
    std::string csv = slurp("/tmp/dyad_dz1/decompose.csv");
    CHECK(csv.find("sigma1") != std::string::npos);
    // every numeric field is exactly 0
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line); // header
    while (std::getline(lines, line)) {
        auto pos = line.rfind(',');
        CHECK(line.substr(pos + 1) == "0");
    }
    CHECK(run("decompose --config /tmp/dyad_dz.json --out /tmp/dyad_dz2") == 0);
    CHECK(slurp("/tmp/dyad_dz1/decompose.csv") == slurp("/tmp/dyad_dz2/decompose.csv"));

    write_config("/tmp/dyad_db.json",
                 "{\"kernel\":\"beurling-re\", \"grid\": {\"L\": 4}, \"corpus\": {\"seed\": 3, \"count\": 2},"
                 " \"trunc\": {\"kind\":\"smooth\", \"eps\": 0.25}}");
    CHECK(run("decompose --config /tmp/dyad_db.json --out /tmp/dyad_db1") == 0);
}

TEST_CASE("sparse on constants reports the single root cube") {
    write_config("/tmp/dyad_sp.json", "{\"grid\": {\"L\": 5}, \"input\": \"constants\"}");
    CHECK(run("sparse --config /tmp/dyad_sp.json --out /tmp/dyad_sp1 --eta 0.5") == 0);
    std::string js = slurp("/tmp/dyad_sp1/sparse.json");
    CHECK(js.find("\"cubes\"") != std::string::npos);
    std::string csv = slurp("/tmp/dyad_sp1/sparse.csv");
    CHECK(csv.find("\n1,") != std::string::npos); // exactly one cube
}

TEST_CASE("norms and coeff-bounds succeed on small configs") {
    write_config("/tmp/dyad_nm.json", "{\"grid\": {\"L\": 6}, \"trials\": 6}");
    CHECK(run("norms --config /tmp/dyad_nm.json --out /tmp/dyad_nm1 --seed 5") == 0);
    CHECK(!slurp("/tmp/dyad_nm1/norms.csv").empty());

    write_config("/tmp/dyad_cb.json",
                 "{\"kernel\":\"beurling-re\", \"grid\": {\"L\": 5, \"r\": 4},"
                 " \"trunc\": {\"kind\":\"smooth\", \"eps\": 0.25, \"eps2\": 4.25},"
                 " \"corpus\": {\"seed\": 3, \"count\": 1}}");
    CHECK(run("coeff-bounds --config /tmp/dyad_cb.json --out /tmp/dyad_cb1") == 0);
    std::string fam = slurp("/tmp/dyad_cb1/coeff_bounds.csv");
    CHECK(fam.find("p1-separated") != std::string::npos);
}
