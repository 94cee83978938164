use jpji::simgen::{generate_dataset, ClusterScenario, ScenarioSpec};

use crate::io::{self, Manifest, MatrixFormat, SubjectEntry, TruthEntry, FORMAT_VERSION, MANIFEST};
use crate::{CliError, SimulateArgs, EXIT_INVALID_SPEC};

pub fn spec_from_args(a: &SimulateArgs) -> ScenarioSpec {
    let spec = ScenarioSpec {
        n_subjects: a.subjects,
        joint: a.joint,
        pjoint: a.pjoint,
        individual: a.individual,
        pjoint_per_subject: a.pjoint_per_subject.clone(),
        individual_per_subject: a.individual_per_subject.clone(),
        clusters: match &a.cluster_map {
            Some(m) => ClusterScenario::Explicit(m.clone()),
            None => ClusterScenario::Count(a.clusters),
        },
        n_voxels: a.voxels,
        n_time: a.time,
        snr_db: a.snr_db,
        seed: a.seed,
        ..ScenarioSpec::default()
    };
    match a.random_counts {
        Some(max) => spec.with_random_counts(max),
        None => spec,
    }
}

pub fn run(a: &SimulateArgs) -> Result<(), CliError> {
    let spec = spec_from_args(a);
    spec.validate().map_err(|e| CliError::new(EXIT_INVALID_SPEC, e.to_string()))?;
    let (data, truth) = generate_dataset(&spec).map_err(|e| CliError::general(e.to_string()))?;
    let format = MatrixFormat::from_flag(a.binary);
    io::create_dir(&a.out)?;
    let mut subjects = Vec::with_capacity(data.len());
    let mut sources = Vec::new();
    let mut mixing = Vec::new();
    for (k, d) in data.iter().enumerate() {
        let obs = io::file_name("obs", &d.id, format);
        io::write_matrix(&a.out.join(&obs), &d.observations)?;
        subjects.push(SubjectEntry { id: d.id.clone(), n_time: d.n_time(), path: obs });
        let s = io::file_name("truth_s", &d.id, format);
        io::write_matrix(&a.out.join(&s), &truth.sources[k])?;
        sources.push(s);
        let m = io::file_name("truth_a", &d.id, format);
        io::write_matrix(&a.out.join(&m), &truth.mixing[k])?;
        mixing.push(m);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION.into(),
        n_subjects: data.len(),
        n_voxels: spec.n_voxels,
        seed: spec.seed,
        spec: Some(spec),
        subjects,
        truth: Some(TruthEntry { labels: truth.labels, cluster_of: truth.cluster_of, sources, mixing }),
    };
    io::write_json(&a.out.join(MANIFEST), &manifest)
}
