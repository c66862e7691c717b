// Writes a synthetic catalog and session log for experiments.
#include "m2trec/errors.hpp"
#include "m2trec/synthetic.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic catalog (TSV) and session log (JSON lines)", "m2trec_synth"};
  std::string kind = "category";
  std::string catalog = "catalog.tsv";
  std::string sessions = "sessions.jsonl";
  std::size_t count = 0;
  std::uint64_t seed = 1;
  app.add_option("kind", kind, "successor or category")->check(CLI::IsMember({"successor", "category"}));
  app.add_option("--catalog", catalog, "output catalog path");
  app.add_option("--sessions", sessions, "output sessions path");
  app.add_option("--count", count, "number of sessions (default depends on kind)");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    m2trec::SyntheticCorpus corpus;
    if (kind == "successor") {
      m2trec::SuccessorOptions o;
      o.seed = seed;
      if (count > 0) o.sessions = count;
      corpus = m2trec::successor_corpus(o);
    } else {
      m2trec::CategoryOptions o;
      o.seed = seed;
      if (count > 0) o.sessions = count;
      corpus = m2trec::category_corpus(o);
    }
    m2trec::write_catalog(catalog, corpus.catalog);
    m2trec::write_sessions(sessions, corpus.sessions);
    std::cout << corpus.catalog.size() << " items, " << corpus.sessions.size() << " sessions\n";
  } catch (const m2trec::ValidationError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  return 0;
}
