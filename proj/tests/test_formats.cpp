// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "advreg/checkpoint.hpp"
#include "advreg/errors.hpp"
#include "advreg/hash.hpp"
#include "advreg/kvtext.hpp"
#include "advreg/synthcp.hpp"
#include "support.hpp"

using namespace advreg;
using namespace advreg::testing;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.what();
  }
  return "<no ParseError>";
}

bool contains(const std::string& s, const std::string& part) {
  return s.find(part) != std::string::npos;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "advreg_test_formats";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

// --- hashing and files -----------------------------------------------------------

TEST(Hash, KnownFnvVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Files, AtomicWriteReplacesAndReadsBack) {
  const fs::path p = scratch("atomic.txt");
  write_file_atomic(p, "first");
  write_file_atomic(p, "second\n");
  EXPECT_EQ(read_file(p), "second\n");
  EXPECT_EQ(file_hash(p), hex64(fnv1a64("second\n")));
  EXPECT_THROW(read_file(scratch("does_not_exist")), std::exception);
}

// --- key-value text ----------------------------------------------------------------

TEST(KeyValueText, ParsesCommentsAndWhitespace) {
  const auto kv = KeyValueText::parse("# header\n  a = 1.5  # trailing\n\nb=  x y \nc = 7\n");
  EXPECT_EQ(kv.keys(), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(kv.get_double("a"), 1.5);
  EXPECT_EQ(kv.get_string("b"), "x y");
  EXPECT_EQ(kv.get_uint("c"), 7u);
  EXPECT_EQ(kv.line_of("c"), 5u);
  EXPECT_EQ(KeyValueText::parse("v = 1 -2 3e-1").get_doubles("v"), (std::vector<double>{1, -2, 0.3}));
}

TEST(KeyValueText, ErrorsNameSourceLineAndKey) {
  EXPECT_TRUE(contains(error_of([] { KeyValueText::parse("a = 1\nnonsense\n", "cfg"); }), "cfg:2:"));
  EXPECT_TRUE(contains(error_of([] { KeyValueText::parse("a = 1\na = 2\n", "cfg"); }),
                       "cfg:2: duplicate key 'a'"));
  const auto kv = KeyValueText::parse("x = abc\nn = -3\nv = 1 two\n", "cfg");
  EXPECT_TRUE(contains(error_of([&] { kv.get_double("x"); }), "cfg:1: field 'x'"));
  EXPECT_TRUE(contains(error_of([&] { kv.get_uint("n"); }), "cfg:2: field 'n'"));
  EXPECT_TRUE(contains(error_of([&] { kv.get_doubles("v"); }), "cfg:3:"));
  EXPECT_TRUE(contains(error_of([&] { kv.get_double("missing"); }), "missing key 'missing'"));
  EXPECT_TRUE(contains(error_of([&] { kv.reject_unknown({"x", "n"}); }), "cfg:3: unknown field 'v'"));
  EXPECT_NO_THROW(kv.reject_unknown({"x", "n", "v"}));
}

TEST(FormatDouble, RoundTripsExactly) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
    const auto back = KeyValueText::parse("x = " + format_double(x)).get_double("x");
    EXPECT_EQ(back, x);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(5), "5");
}

// --- world spec --------------------------------------------------------------------

TEST(SpecText, RoundTripsAndHashIsStable) {
  const WorldSpec spec = default_cp_spec(0);
  const std::string text = spec_to_text(spec);
  const WorldSpec back = spec_from_text(text);
  EXPECT_EQ(spec_to_text(back), text);
  EXPECT_EQ(back.prototypes, spec.prototypes);
  EXPECT_EQ(back.train_prior, spec.train_prior);
  EXPECT_EQ(spec_hash(back), spec_hash(spec));
  EXPECT_EQ(spec_hash(spec), "9678c238f916a2b2");

  const fs::path p = scratch("spec.txt");
  write_spec(spec, p);
  EXPECT_EQ(spec_hash(read_spec(p)), spec_hash(spec));
}

TEST(SpecText, RejectsMalformedInput) {
  const std::string good = spec_to_text(default_cp_spec(0));
  auto replace = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  EXPECT_TRUE(contains(error_of([&] { spec_from_text(replace("advreg-worldspec/1", "other/9")); }),
                       "unsupported format"));
  EXPECT_TRUE(contains(error_of([&] { spec_from_text(replace("grounding = 0.95", "grounding = lots")); }),
                       "field 'grounding'"));
  EXPECT_TRUE(contains(error_of([&] { spec_from_text(replace("grounding = 0.95", "grounding = 1.5")); }),
                       "grounding"));
  EXPECT_TRUE(contains(error_of([&] { spec_from_text(good + "extra = 1\n"); }), "unknown field 'extra'"));
  EXPECT_TRUE(contains(error_of([&] { spec_from_text(good + "prototype[40] = 1\n"); }), "expected"));
  const std::string proto = "prototype[3] = ";
  const auto at = good.find(proto);
  std::string short_row = good;
  short_row.replace(at, good.find('\n', at) - at, proto + "1 2");
  EXPECT_TRUE(contains(error_of([&] { spec_from_text(short_row); }), "has 2 values, expected 16"));
}

// --- datasets ----------------------------------------------------------------------

TEST(DatasetText, RoundTripsBitExactly) {
  const WorldSpec spec = default_cp_spec(0);
  const Dataset d = generate_split(spec, Split::kTest, 300, 8);
  const std::string text = dataset_to_text(d);
  const Dataset back = dataset_from_text(text);
  EXPECT_EQ(back.split, Split::kTest);
  EXPECT_EQ(back.seed, 8u);
  EXPECT_EQ(back.spec_hash, d.spec_hash);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.records[i].features, d.records[i].features) << i;
    EXPECT_EQ(back.records[i].tokens, d.records[i].tokens);
    EXPECT_EQ(back.records[i].answer, d.records[i].answer);
  }
  EXPECT_EQ(dataset_to_text(back), text);

  const fs::path p = scratch("data.jsonl");
  write_dataset(d, p);
  EXPECT_EQ(dataset_to_text(read_dataset(p)), text);
}

TEST(DatasetText, ErrorsCarryLineNumbers) {
  const Dataset d = generate_split(default_cp_spec(0), Split::kTrain, 3, 1);
  const std::string text = dataset_to_text(d);
  std::vector<std::string> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    const auto nl = text.find('\n', pos);
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  auto join = [](const std::vector<std::string>& ls) {
    std::string s;
    for (const auto& l : ls) s += l + "\n";
    return s;
  };
  auto broken = lines;
  broken[2] = "{not json";
  EXPECT_TRUE(contains(error_of([&] { dataset_from_text(join(broken)); }), "dataset:3:"));
  broken = lines;
  broken[3].replace(broken[3].find("\"answer\":"), 9, "\"answer\":9999,\"x\":");
  EXPECT_TRUE(contains(error_of([&] { dataset_from_text(join(broken)); }), "dataset:4:"));
  broken = lines;
  broken.pop_back();
  EXPECT_TRUE(contains(error_of([&] { dataset_from_text(join(broken)); }), "announces 3 records, found 2"));
  broken = lines;
  broken[0].replace(broken[0].find("\"train\""), 7, "\"valid\"");
  EXPECT_TRUE(contains(error_of([&] { dataset_from_text(join(broken)); }), "dataset:1:"));
  EXPECT_THROW(dataset_from_text(""), ParseError);
}

// --- checkpoints -------------------------------------------------------------------

TEST(Checkpoint, RoundTripsBitExactly) {
  ModelBundle bundle = ModelBundle::initialize(ModelDims{}, 9);
  bundle.parameters()[0].value[0] = std::numeric_limits<double>::denorm_min();
  bundle.parameters()[1].value[0] = -0.0;
  const std::string bytes = checkpoint_bytes(bundle, "abc");
  const Checkpoint back = checkpoint_from_bytes(bytes);
  EXPECT_EQ(back.spec_hash, "abc");
  EXPECT_EQ(bundle_hash(back.bundle), bundle_hash(bundle));
  EXPECT_TRUE(std::signbit(back.bundle.parameters()[1].value[0]));
  for (std::size_t i = 0; i < bundle.parameters().size(); ++i) {
    EXPECT_EQ(back.bundle.parameters()[i].name, bundle.parameters()[i].name);
    EXPECT_EQ(back.bundle.parameters()[i].partition, bundle.parameters()[i].partition);
    EXPECT_EQ(back.bundle.parameters()[i].value, bundle.parameters()[i].value);
  }
  EXPECT_EQ(bytes.substr(0, 8), "ADVRGCK1");
  EXPECT_EQ(checkpoint_bytes(back.bundle, "abc"), bytes);

  const fs::path p = scratch("model.bin");
  write_checkpoint(p, bundle, "abc");
  EXPECT_EQ(read_file(p), bytes);
  EXPECT_EQ(bundle_hash(read_checkpoint(p).bundle), bundle_hash(bundle));
}

TEST(Checkpoint, DetectsCorruption) {
  const std::string bytes = checkpoint_bytes(ModelBundle::initialize(small_dims(), 1), "h");
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_TRUE(contains(error_of([&] { checkpoint_from_bytes(flipped); }), "checksum"));
  EXPECT_THROW(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(checkpoint_from_bytes("short"), ParseError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(checkpoint_from_bytes(magic), ParseError);
}

TEST(Checkpoint, BundleHashSeesEveryValue) {
  ModelBundle b = ModelBundle::initialize(small_dims(), 2);
  const std::string before = bundle_hash(b);
  b.parameters().back().value[0] = std::nextafter(b.parameters().back().value[0], 1.0);
  EXPECT_NE(bundle_hash(b), before);
}
