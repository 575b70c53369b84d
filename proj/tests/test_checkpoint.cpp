#include <gtest/gtest.h>

#include <fstream>
#include <limits>

#include "intrinsic/checkpoint.hpp"
#include "intrinsic/errors.hpp"
#include "support.hpp"

namespace intrinsic {
namespace {

TEST(Checkpoint, RoundTripIsBitExact) {
  testing::TempDir dir;
  Checkpoint ckpt;
  ckpt.metadata = {{"step", 7}, {"note", "x"}};
  ckpt.arrays.emplace_back("a", Tensor(Shape{2, 3}, {1.0, -0.0, 1e-310, std::numeric_limits<double>::max(), 0.1, 3}));
  ckpt.arrays.emplace_back("scalar", Tensor::scalar(0.5));
  ckpt.arrays.emplace_back("nan", Tensor(Shape{1}, std::numeric_limits<double>::quiet_NaN()));
  save_checkpoint(dir / "c.ckpt", ckpt);
  const auto back = load_checkpoint(dir / "c.ckpt");
  EXPECT_EQ(back.metadata, ckpt.metadata);
  ASSERT_EQ(back.arrays.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.arrays[i].first, ckpt.arrays[i].first);
    EXPECT_TRUE(bit_identical(back.arrays[i].second, ckpt.arrays[i].second));
  }
  ASSERT_NE(back.find("scalar"), nullptr);
  EXPECT_EQ(back.find("missing"), nullptr);
}

TEST(Checkpoint, BundleRoundTrip) {
  testing::TempDir dir;
  const nets::ModelBundle bundle(testing::tiny_bundle(), {"spring", "winter"}, 9);
  save_checkpoint(dir / "b.ckpt", bundle_checkpoint(bundle, 12));
  const auto loaded = load_checkpoint(dir / "b.ckpt");
  EXPECT_EQ(loaded.metadata.at("step"), 12);
  const auto rebuilt = bundle_from_checkpoint(loaded);
  EXPECT_EQ(rebuilt->domains(), bundle.domains());
  const auto a = bundle.state(), b = rebuilt->state();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_identical(a[i].second, b[i].second)) << a[i].first;
}

TEST(Checkpoint, RejectsMissingAndCorruptFiles) {
  testing::TempDir dir;
  EXPECT_THROW(load_checkpoint(dir / "none.ckpt"), IoError);
  {
    std::ofstream os(dir / "text.ckpt");
    os << "hello world, not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(dir / "text.ckpt"), DataError);

  Checkpoint ckpt;
  ckpt.arrays.emplace_back("w", Tensor(Shape{64}, 1.0));
  save_checkpoint(dir / "ok.ckpt", ckpt);
  const auto size = std::filesystem::file_size(dir / "ok.ckpt");
  std::filesystem::copy_file(dir / "ok.ckpt", dir / "cut.ckpt");
  std::filesystem::resize_file(dir / "cut.ckpt", size - 17);
  EXPECT_THROW(load_checkpoint(dir / "cut.ckpt"), DataError);

  Checkpoint bare;
  EXPECT_THROW(bundle_from_checkpoint(bare), DataError);
}

}  // namespace
}  // namespace intrinsic
