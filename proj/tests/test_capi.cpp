#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "frap/frap.h"

namespace fs = std::filesystem;

namespace {

const char* kConfig = R"({
  "sim": {"episode_length": 600},
  "flow": {"preset": "unbalanced-WE", "duration": 600},
  "training": {"max_learner_steps": 20, "eval_period": 10, "learning_starts": 16, "batch_size": 8},
  "seed": 2
})";

void collect(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); }

}  // namespace

TEST_CASE("errors are reported through status codes")
{
    frap_experiment* e = nullptr;
    CHECK(frap_experiment_from_json("{\"bogus\": 1}", &e) == FRAP_E_CONFIG);
    CHECK(e == nullptr);
    CHECK(std::string(frap_last_error()).find("bogus") != std::string::npos);
    CHECK(frap_experiment_from_json("{", &e) == FRAP_E_CONFIG);
    CHECK(frap_experiment_load("/nonexistent/config.json", &e) == FRAP_E_IO);
    CHECK(frap_experiment_from_json(nullptr, &e) == FRAP_E_INVALID_ARGUMENT);
    CHECK(frap_cmd_train(nullptr, nullptr) == FRAP_E_INVALID_ARGUMENT);
    CHECK(std::string(frap_status_name(FRAP_E_CHECKPOINT)) == "checkpoint error");
    frap_experiment_destroy(nullptr);
}

TEST_CASE("phase table export")
{
    size_t need = 0;
    CHECK(frap_phase_table_json(4, "8-phase", nullptr, 0, &need) == FRAP_E_BUFFER_TOO_SMALL);
    std::string buf(need, '\0');
    CHECK(frap_phase_table_json(4, "8-phase", buf.data(), buf.size(), &need) == FRAP_OK);
    CHECK(buf.find("\"phases\"") != std::string::npos);
    CHECK(frap_phase_table_json(3, "4-phase", nullptr, 0, &need) == FRAP_E_INVALID_ARGUMENT);
    CHECK(frap_phase_table_json(6, "8-phase", nullptr, 0, &need) == FRAP_E_INVALID_ARGUMENT);
}

TEST_CASE("simulator handle")
{
    frap_experiment* e = nullptr;
    REQUIRE(frap_experiment_from_json(kConfig, &e) == FRAP_OK);
    frap_simulator* s = nullptr;
    REQUIRE(frap_simulator_create(e, &s) == FRAP_OK);
    int action = 1;
    double reward = 0;
    int done = 0;
    CHECK(frap_simulator_step(s, &action, 1, &reward, &done) == FRAP_E_STATE);
    REQUIRE(frap_simulator_reset(s, 0) == FRAP_OK);
    CHECK(frap_simulator_num_movements(s) == 8);
    CHECK(frap_simulator_num_phases(s) == 8);
    int steps = 0;
    while (!done) {
        REQUIRE(frap_simulator_step(s, &action, 1, &reward, &done) == FRAP_OK);
        CHECK(reward <= 0);
        ++steps;
    }
    CHECK(steps == 60);
    CHECK(frap_simulator_clock(s) == 600);
    CHECK(frap_simulator_step(s, &action, 1, &reward, &done) == FRAP_E_STATE);
    int counts[8], bits[8], phase = 0;
    CHECK(frap_simulator_observe(s, 0, counts, bits, &phase) == FRAP_OK);
    CHECK(phase == 1);
    CHECK(frap_simulator_observe(s, 3, counts, bits, &phase) == FRAP_E_INVALID_ARGUMENT);
    double tt = 0;
    int64_t exited = 0, inside = 0;
    CHECK(frap_simulator_metrics(s, &tt, &exited, &inside) == FRAP_OK);
    CHECK(exited > 0);
    frap_simulator_reset(s, 0);
    int bad = 9;
    CHECK(frap_simulator_step(s, &bad, 1, &reward, &done) == FRAP_E_INVALID_ARGUMENT);
    frap_simulator_destroy(s);
    frap_experiment_destroy(e);
}

TEST_CASE("commands through the C interface")
{
    const fs::path dir = fs::temp_directory_path() / "frap_capi_test";
    fs::remove_all(dir);
    frap_experiment* e = nullptr;
    REQUIRE(frap_experiment_from_json(kConfig, &e) == FRAP_OK);
    REQUIRE(frap_experiment_set_out_dir(e, dir.string().c_str()) == FRAP_OK);
    std::vector<std::string> lines;
    frap_experiment_set_log(e, collect, &lines);

    double best = 0;
    REQUIRE(frap_cmd_train(e, &best) == FRAP_OK);
    CHECK(best > 0);
    CHECK(lines.size() == 3);
    const std::string ckpt = (dir / "checkpoint.bin").string();
    double tt = 0, orig = 0, moved = 0;
    int64_t exited = 0;
    CHECK(frap_cmd_eval(e, ckpt.c_str(), &tt, &exited) == FRAP_OK);
    CHECK(frap_cmd_transfer(e, ckpt.c_str(), "flip", 0, &orig, &moved) == FRAP_OK);
    CHECK(orig == tt);
    CHECK(frap_cmd_transfer(e, ckpt.c_str(), "mirror", 0, &orig, &moved) == FRAP_E_INVALID_ARGUMENT);
    CHECK(frap_cmd_eval(e, (dir / "missing.bin").string().c_str(), &tt, &exited) == FRAP_E_CHECKPOINT);
    CHECK(frap_cmd_compare(e, "fixedtime,sotl") == FRAP_OK);
    CHECK(fs::exists(dir / "compare.csv"));
    CHECK(frap_cmd_compare(e, "nothing") == FRAP_E_INVALID_ARGUMENT);
    CHECK(frap_cmd_gen_flow(e, (dir / "flow.csv").string().c_str()) == FRAP_OK);
    CHECK(frap_experiment_set_agent(e, "bogus") == FRAP_E_CONFIG);

    size_t need = 0;
    frap_experiment_to_json(e, nullptr, 0, &need);
    std::string buf(need, '\0');
    CHECK(frap_experiment_to_json(e, buf.data(), buf.size(), &need) == FRAP_OK);
    CHECK(buf.find("unbalanced-WE") != std::string::npos);
    frap_experiment_destroy(e);
    fs::remove_all(dir);
}
