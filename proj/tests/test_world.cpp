#include "genvideo/error.hpp"
#include "genvideo/world.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace genvideo;

TEST(World, BuiltinValidatesAndRoundTrips) {
  const SyntheticWorld w = SyntheticWorld::builtin();
  EXPECT_NO_THROW(w.validate());
  const SyntheticWorld back = SyntheticWorld::parse(w.serialize());
  EXPECT_EQ(back.scale, w.scale);
  EXPECT_EQ(back.channels, w.channels);
  ASSERT_EQ(back.scenes.size(), w.scenes.size());
  for (std::size_t i = 0; i < w.scenes.size(); ++i) EXPECT_EQ(back.scenes[i], w.scenes[i]);
}

TEST(World, TargetFootprintsEncloseSources) {
  const SyntheticWorld w = SyntheticWorld::builtin();
  const std::pair<const char*, const char*> pairs[] = {
      {"car", "bus"}, {"ball", "balloon"}, {"cat", "tiger"}, {"boat", "ship"}, {"bird", "eagle"}};
  for (auto [src, trg] : pairs) {
    const int n = std::min(w.scene(src).frames_in_bounds(), w.scene(trg).frames_in_bounds());
    ASSERT_GE(n, 4) << src;
    for (int k = 0; k < n; ++k) {
      const Rect a = w.scene(src).footprint(k), b = w.scene(trg).footprint(k);
      EXPECT_TRUE(a.row >= b.row && a.col >= b.col && a.row + a.height <= b.row + b.height &&
                  a.col + a.width <= b.col + b.width)
          << src << " frame " << k;
      EXPECT_GE(b.area(), 2 * a.area());
      EXPECT_LE(b.area(), 4 * a.area());
    }
  }
}

TEST(World, NoTwoScenesRenderTheSameFrame) {
  const SyntheticWorld w = SyntheticWorld::builtin();
  std::vector<std::pair<std::string, Tensor4d>> frames;
  for (const auto& s : w.scenes) {
    for (int k = 0; k < std::min(16, s.frames_in_bounds()); ++k) {
      frames.emplace_back(s.id, w.render(s.id, k));
    }
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t j = i + 1; j < frames.size(); ++j) {
      if (frames[i].first == frames[j].first || !frames[i].second.same_shape(frames[j].second)) {
        continue;
      }
      EXPECT_FALSE(frames[i].second == frames[j].second)
          << frames[i].first << " vs " << frames[j].first;
    }
  }
}

TEST(World, RenderPlacesRectangle) {
  const SyntheticWorld w = SyntheticWorld::builtin();
  const SceneSpec& s = w.scene("car");
  const Tensor4d r = w.render("car", 2);
  const Rect fp = s.footprint(2);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      EXPECT_EQ(r(0, 1, y, x), fp.contains(y, x) ? s.value : s.background);
    }
  }
  const Tensor4d fg = w.render("car", 2, true);
  EXPECT_EQ(fg(0, 0, 0, 0), 0.0);
  EXPECT_THROW(w.render("car", 100), Error);
  EXPECT_THROW(w.scene("nope"), Error);
}

TEST(World, TextureTravelsWithRectangle) {
  const SyntheticWorld w = SyntheticWorld::builtin();
  const SceneSpec& s = w.scene("textured-pan");
  const Tensor4d a = w.render("textured-pan", 0), b = w.render("textured-pan", 1);
  const Rect fa = s.footprint(0);
  for (int c = 0; c < w.channels; ++c) {
    for (int y = fa.row; y < fa.row + fa.height; ++y) {
      for (int x = fa.col; x < fa.col + fa.width; ++x) {
        EXPECT_EQ(a(0, c, y, x), b(0, c, y + s.velocity.dy, x + s.velocity.dx));
      }
    }
  }
  EXPECT_GE(a.values().minCoeff(), 0.0);
  EXPECT_LE(a.values().maxCoeff(), 1.0);
}

TEST(World, FlowMatchesRenders) {
  const SyntheticWorld w = SyntheticWorld::builtin();
  const SynthClip clip = w.synth_video("textured-pan", 5);
  ASSERT_EQ(clip.forward_flow.size(), 4u);
  ASSERT_EQ(clip.backward_flow.size(), 4u);
  for (int i = 0; i + 1 < 5; ++i) {
    const Tensor4d a = w.render("textured-pan", i), b = w.render("textured-pan", i + 1);
    const FlowMap& f = clip.forward_flow[static_cast<std::size_t>(i)];
    int valid = 0;
    for (Index y = 0; y < a.height(); ++y) {
      for (Index x = 0; x < a.width(); ++x) {
        if (!f.valid(y, x)) continue;
        ++valid;
        for (Index c = 0; c < a.channels(); ++c) {
          EXPECT_EQ(a(0, c, y, x), b(0, c, y + f.dy(y, x), x + f.dx(y, x)));
        }
      }
    }
    EXPECT_GT(valid, 0);
    const FlowMap& g = clip.backward_flow[static_cast<std::size_t>(i)];
    for (Index y = 0; y < a.height(); ++y) {
      for (Index x = 0; x < a.width(); ++x) {
        if (!g.valid(y, x)) continue;
        for (Index c = 0; c < a.channels(); ++c) {
          EXPECT_EQ(b(0, c, y, x), a(0, c, y + g.dy(y, x), x + g.dx(y, x)));
        }
      }
    }
  }
}

TEST(World, ParseRejectsBadInput) {
  EXPECT_THROW(SyntheticWorld::parse("scene.a.prompt = x\n"), Error);
  EXPECT_THROW(SyntheticWorld::parse("bogus = 1\n"), Error);
  EXPECT_THROW(SyntheticWorld::parse("scene.a.prompt = x\nscene.a.size = 4 4\n"
                                     "scene.a.rect = 0 0 5 5\n"),
               Error);
  EXPECT_THROW(SyntheticWorld::parse("scene.a.prompt = x\nscene.a.size = 4 4\n"
                                     "scene.a.rect = 0 0 2 2\nscene.a.value = 1.5\n"),
               Error);
  EXPECT_THROW(SyntheticWorld::load("/nonexistent/world.txt"), Error);
}

TEST(World, UpsampleNearestReplicatesBlocks) {
  Tensor4d t(1, 1, 2, 2);
  t.values() << 1, 2, 3, 4;
  const Tensor4d u = upsample_nearest(t, 3);
  EXPECT_EQ(u.height(), 6);
  EXPECT_EQ(u(0, 0, 5, 5), 4.0);
  EXPECT_EQ(u(0, 0, 2, 3), 2.0);
  EXPECT_THROW(upsample_nearest(t, 0), std::invalid_argument);
}
