//! The `schema` subcommand: an annotated example of every experiment.

pub const EXAMPLES: [(&str, &str); 9] = [
    ("sample-prior", include_str!("../schema/sample-prior.toml")),
    ("forward-demo", include_str!("../schema/forward-demo.toml")),
    ("posterior-sample", include_str!("../schema/posterior-sample.toml")),
    ("gap-scaling", include_str!("../schema/gap-scaling.toml")),
    ("hellinger-wellposedness", include_str!("../schema/hellinger-wellposedness.toml")),
    ("posterior-approximation", include_str!("../schema/posterior-approximation.toml")),
    ("spde-invariance", include_str!("../schema/spde-invariance.toml")),
    ("kl-convergence", include_str!("../schema/kl-convergence.toml")),
    ("fernique", include_str!("../schema/fernique.toml")),
];

const PREAMBLE: &str = "\
# bayesfn experiment configuration (TOML)
#
# Top level:
#   experiment  one of the names below (required)
#   seed        u64 master seed (required); stream 0 drives sampling,
#               stream 1 synthetic data, stream 2 dumped trajectories
#   output_dir  optional; defaults to $BAYESFN_OUTPUT_DIR, then ./bayesfn-out
#
# Exactly one parameter table, named after the experiment, must be present.
# Unknown keys are rejected everywhere.
";

pub fn render() -> String {
    let mut s = String::from(PREAMBLE);
    for (name, body) in EXAMPLES {
        s.push_str(&format!("\n# ---- {name} ----\n"));
        s.push_str(body);
    }
    s
}
