// Generates the bundled toy corpus: short English-like paragraphs from a small
// phrase grammar, one document per line. Output depends only on the seed
// (raw mt19937_64 draws, no library distributions), so it is reproducible
// across standard libraries.
//
//   make_corpus [--bytes N] [--seed S] [--output PATH]

#include <CLI11.hpp>

#include <array>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

namespace {

using Words = std::vector<std::string>;

const Words kNames = {"the miller",  "the old sailor", "a young clerk", "the widow",    "the captain",
                      "my brother",  "the doctor",     "a tired farmer", "the teacher", "the innkeeper",
                      "the children", "our neighbour", "the stranger",  "the king",     "a small boy"};
const Words kVerbs = {"walked to",  "looked at", "spoke with", "waited for", "thought about", "returned to",
                      "carried",    "found",     "remembered", "followed",   "watched",       "left"};
const Words kAdjectives = {"quiet", "old",   "narrow", "bright", "cold",   "green", "empty",
                           "long",  "heavy", "little", "dark",   "silent", "warm"};
const Words kPlaces = {"house", "river", "road",  "garden", "church", "harbour", "market",
                       "field", "hill",  "bridge", "window", "village", "forest"};
const Words kTimes = {"in the morning", "at night",    "after supper", "before the rain", "in the spring",
                      "every evening",  "that winter", "at noon",      "on sunday",       "for a long time"};
const Words kFeelings = {"glad", "afraid", "weary", "certain", "sorry", "curious", "content", "uneasy"};
const Words kSayings = {"it is late",        "the weather will turn", "nobody came back", "the bread is warm",
                        "the road is long",  "we must go home",       "the lamp is out",  "all is well"};

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  std::string document() {
    std::string doc;
    const int sentences = 2 + pick(4);
    for (int s = 0; s < sentences; ++s) {
      if (s) doc += ' ';
      doc += sentence();
    }
    return doc;
  }

 private:
  int pick(int n) { return static_cast<int>(rng_() % static_cast<std::uint64_t>(n)); }
  const std::string& any(const Words& w) { return w[pick(static_cast<int>(w.size()))]; }

  std::string noun_phrase() {
    std::string p = "the ";
    if (pick(2)) p += any(kAdjectives) + " ";
    return p + any(kPlaces);
  }

  std::string sentence() {
    std::string s;
    switch (pick(6)) {
      case 0:
        s = any(kNames) + " " + any(kVerbs) + " " + noun_phrase() + " " + any(kTimes) + ".";
        break;
      case 1:
        s = any(kTimes) + " " + any(kNames) + " " + any(kVerbs) + " " + noun_phrase() + ".";
        break;
      case 2:
        s = any(kNames) + " was " + any(kFeelings) + ", and " + any(kNames) + " " + any(kVerbs) + " " +
            noun_phrase() + ".";
        break;
      case 3:
        s = "\"" + any(kSayings) + ",\" said " + any(kNames) + ".";
        break;
      case 4:
        s = "there was a " + any(kAdjectives) + " " + any(kPlaces) + " near " + noun_phrase() + ".";
        break;
      default:
        s = any(kNames) + " " + any(kVerbs) + " " + noun_phrase() + " and " + any(kVerbs) + " " + noun_phrase() +
            ".";
        break;
    }
    s[0] = static_cast<char>(s[0] == '"' ? s[0] : std::toupper(static_cast<unsigned char>(s[0])));
    if (s[0] == '"') s[1] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[1])));
    return s;
  }

  std::mt19937_64 rng_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate the toy training corpus"};
  std::size_t bytes = 1 << 20;
  std::uint64_t seed = 20240601;
  std::string output = "data/corpus.txt";
  app.add_option("--bytes", bytes, "Approximate corpus size");
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--output", output, "Output path");
  CLI11_PARSE(app, argc, argv);

  std::ofstream out(output, std::ios::trunc);
  if (!out) {
    std::cerr << "cannot write " << output << '\n';
    return 1;
  }
  Generator gen(seed);
  std::size_t written = 0;
  while (written < bytes) {
    const std::string doc = gen.document();
    out << doc << '\n';
    written += doc.size() + 1;
  }
  std::cout << "wrote " << written << " bytes to " << output << '\n';
  return 0;
}
