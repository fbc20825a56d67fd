#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "expertadapt/report/tables.hpp"

using namespace expertadapt;
using report::RenderCell;
using report::RenderTable;
using report::TableFormat;

namespace {

RenderTable sample_table() {
  RenderTable t;
  t.title = "adaptation, expert 6";
  t.row_header = "setting";
  t.columns = {"Dice (%)", "ASSD", "95HD"};
  t.row_labels = {"n=5, from scratch", "n=5, adapted"};
  RenderCell dice_scratch{71.25, 2, false, false, false};
  RenderCell assd_scratch{2.3456, 3, false, false, false};
  RenderCell hd_scratch{7.0, 3, false, false, true};
  RenderCell dice_adapt{88.6649, 2, true, true, false};
  RenderCell assd_adapt{1.2, 3, true, false, false};
  RenderCell hd_adapt{4.5, 3, false, true, false};
  t.cells = {{dice_scratch, assd_scratch, hd_scratch}, {dice_adapt, assd_adapt, hd_adapt}};
  t.notes = {"(*) degenerate variance"};
  return t;
}

}  // namespace

TEST_CASE("markdown output is byte-stable with bold, underline and flags") {
  const std::string got = report::emit_table(sample_table(), TableFormat::markdown);
  const std::string want =
      "### adaptation, expert 6\n"
      "\n"
      "| setting | Dice (%) | ASSD | 95HD |\n"
      "| --- | --- | --- | --- |\n"
      "| n=5, from scratch | 71.25 | 2.346 | 7.000 (*) |\n"
      "| n=5, adapted | **<u>88.66</u>** | **1.200** | <u>4.500</u> |\n"
      "\n"
      "_(*) degenerate variance_\n";
  REQUIRE(got == want);
}

TEST_CASE("csv output carries plain numbers and escapes delimiters") {
  RenderTable t = sample_table();
  t.row_labels[0] = "scratch, n=5 \"cold\"";
  const std::string got = report::emit_table(t, TableFormat::csv);
  const std::string want =
      "setting,Dice (%),ASSD,95HD\n"
      "\"scratch, n=5 \"\"cold\"\"\",71.25,2.346,7.000\n"
      "\"n=5, adapted\",88.66,1.200,4.500\n";
  REQUIRE(got == want);
}

TEST_CASE("json output keeps the styling flags on each cell") {
  const std::string got = report::emit_table(sample_table(), TableFormat::json);
  REQUIRE(got.back() == '\n');
  const nlohmann::json j = nlohmann::json::parse(got);
  REQUIRE(j.at("title") == "adaptation, expert 6");
  REQUIRE(j.at("columns").size() == 3);
  REQUIRE(j.at("rows").size() == 2);
  const auto& adapted = j.at("rows").at(1);
  REQUIRE(adapted.at("label") == "n=5, adapted");
  REQUIRE(adapted.at("cells").at(0).at("value").get<double>() == 88.66);
  REQUIRE(adapted.at("cells").at(0).at("bold").get<bool>() == true);
  REQUIRE(adapted.at("cells").at(0).at("underline").get<bool>() == true);
  REQUIRE(j.at("rows").at(0).at("cells").at(2).at("flagged").get<bool>() == true);
  REQUIRE(j.at("notes").at(0) == "(*) degenerate variance");

  // Rendering twice yields identical bytes.
  REQUIRE(report::emit_table(sample_table(), TableFormat::json) == got);
}

TEST_CASE("an empty table renders as header only") {
  RenderTable t;
  t.row_header = "row";
  t.columns = {"a", "b"};
  REQUIRE(report::emit_table(t, TableFormat::markdown) ==
          "| row | a | b |\n| --- | --- | --- |\n");
  REQUIRE(report::emit_table(t, TableFormat::csv) == "row,a,b\n");
}

TEST_CASE("shape mismatches are rejected") {
  RenderTable t = sample_table();
  t.cells[1].pop_back();
  REQUIRE_THROWS_AS(report::emit_table(t, TableFormat::markdown), DataError);

  RenderTable u = sample_table();
  u.row_labels.pop_back();
  REQUIRE_THROWS_AS(report::emit_table(u, TableFormat::csv), DataError);
}

TEST_CASE("format names parse with aliases") {
  REQUIRE(report::table_format_from_string("md") == TableFormat::markdown);
  REQUIRE(report::table_format_from_string("markdown") == TableFormat::markdown);
  REQUIRE(report::table_format_from_string("csv") == TableFormat::csv);
  REQUIRE(report::table_format_from_string("json") == TableFormat::json);
  REQUIRE_THROWS_AS(report::table_format_from_string("xlsx"), ConfigError);
}
