// SPDX-License-Identifier: Apache-2.0
#include "dsagent/spec_file.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace dsagent;

namespace {

std::string message_of(const std::string& yaml)
{
    try {
        parse_spec_file(yaml);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidSpec);
        return e.detail();
    }
    return "<accepted>";
}

} // namespace

TEST_CASE("sectioned spec file")
{
    const auto spec = parse_spec_file(R"(
general_instructions:
  estimated_steps: 10-20
  plots: 2
  verbose: true
task_specific_instructions:
  task_description: |
    Predict which of two chat responses users prefer.
  data_location: data/train.csv
  metrics: log loss
)");
    REQUIRE(spec.general_instructions.size() == 3);
    CHECK(spec.general_instructions[0] == std::pair<std::string, std::string>{"estimated_steps", "10-20"});
    CHECK(spec.general_instructions[1].second == "2");
    CHECK(spec.general_instructions[2].second == "true");
    CHECK(spec.task_description == "Predict which of two chat responses users prefer.\n");
    CHECK(spec.data_location == "data/train.csv");
    CHECK(spec.metrics == "log loss");
}

TEST_CASE("order of general instructions is the file order")
{
    const auto spec = parse_spec_file("general_instructions:\n  zeta: 1\n  alpha: 2\n  mid: 3\n"
                                      "task_description: t\n");
    CHECK(spec.general_instructions[0].first == "zeta");
    CHECK(spec.general_instructions[1].first == "alpha");
    CHECK(spec.general_instructions[2].first == "mid");
}

TEST_CASE("list form and quoted scalars")
{
    const auto spec = parse_spec_file(
        "general_instructions:\n  - {key: a, value: '007'}\n  - key: b\ntask_description: 'yes'\n");
    CHECK(spec.general_instructions[0].second == "007");
    CHECK(spec.general_instructions[1].second.empty());
    CHECK(spec.task_description == "yes");
}

TEST_CASE("errors name the field")
{
    CHECK(message_of("task_specific_instructions:\n  metrics: x\n") == "task_description must not be empty");
    CHECK(message_of("task_description: t\nbudget: 3\n").rfind("budget: unknown section", 0) == 0);
    CHECK(message_of("task_specific_instructions:\n  task_description: t\n  target: y\n")
              .rfind("task_specific_instructions.target: unknown field", 0) == 0);
    CHECK(message_of("task_description: [1, 2]\n") == "task_description: expected text");
    CHECK(message_of("- just\n- a list\n").find("mapping") != std::string::npos);
    CHECK(message_of("task_description: t\ngeneral_instructions: 5\n") == "general_instructions: expected a mapping");
    CHECK(message_of("key: [unclosed\n").size() > 0);
}

TEST_CASE("data paths resolve against the spec directory")
{
    CHECK(resolve_data_path("", "/base").empty());
    CHECK(resolve_data_path("data/x.csv", "/base/dir") == "/base/dir/data/x.csv");
    CHECK(resolve_data_path("../x.csv", "/base/dir") == "/base/x.csv");
    CHECK(resolve_data_path("/abs/x.csv", "/base") == "/abs/x.csv");
    CHECK(resolve_data_path("file:///abs/x.csv", "/base") == "/abs/x.csv");
    CHECK(resolve_data_path("s3://bucket/x.csv", "/base").empty());
}

TEST_CASE("missing file")
{
    CHECK_THROWS_AS(load_spec_file("/nonexistent/spec.yaml"), Error);
    const auto spec = load_spec_file(std::filesystem::path(DSAGENT_TEST_DIR) / "fixtures" / "e2e" / "spec.yaml");
    CHECK(spec.task_description.find("greeting") != std::string::npos);
}
