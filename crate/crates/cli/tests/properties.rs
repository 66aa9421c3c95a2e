use proptest::prelude::*;

use rrd_cli::config::{parse_experiment, parse_measures};
use rrd_cli::{sweep_points, Measure};

const NAMES: [(&str, Measure); 5] = [
    ("glue", Measure::Glue),
    ("probes", Measure::Probes),
    ("probe", Measure::Probes),
    ("ntk", Measure::Ntk),
    ("kernels", Measure::Ntk),
];

proptest! {
    #[test]
    fn measure_lists_normalize(picks in prop::collection::vec(0usize..NAMES.len(), 1..8), pad in any::<bool>()) {
        let text = picks
            .iter()
            .map(|&i| if pad { format!(" {} ", NAMES[i].0) } else { NAMES[i].0.to_string() })
            .collect::<Vec<_>>()
            .join(",");
        let got = parse_measures(&text).unwrap();
        let mut want: Vec<Measure> = picks.iter().map(|&i| NAMES[i].1).collect();
        want.sort();
        want.dedup();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn sweep_grid_is_the_cartesian_product(
        betas in prop::collection::vec(0.1f64..4.0, 1..4),
        seeds in prop::collection::vec(0u64..100, 1..4),
    ) {
        let list = |v: Vec<String>| v.join(", ");
        let text = format!(
            "preset = \"modadd_mlp_grok\"\n[task]\np = 7\n[sweep]\n\"scale.beta\" = [{}]\n\"run.seed\" = [{}]\n",
            list(betas.iter().map(|b| format!("{b:?}")).collect()),
            list(seeds.iter().map(|s| s.to_string()).collect()),
        );
        let exp = parse_experiment(&text).unwrap();
        let points = sweep_points(&exp).unwrap();
        prop_assert_eq!(points.len(), betas.len() * seeds.len());
        let key = |b: f64, s: u64| format!("{b:?}/{s}");
        let mut got: Vec<String> = points.iter().map(|p| key(p.config.scale.beta, p.config.run.seed)).collect();
        let mut want: Vec<String> = betas.iter().flat_map(|&b| seeds.iter().map(move |&s| key(b, s))).collect();
        got.sort();
        want.sort();
        prop_assert_eq!(got, want);
    }
}
