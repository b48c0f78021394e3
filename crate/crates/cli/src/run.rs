//! Stage execution: each stage writes its artifacts into a staging
//! directory that is committed into the run directory only on success, so
//! a failing stage leaves no partial outputs — just a machine-readable
//! `error.json` naming the stage and the cause.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use basketnet::bipartite::{
    build_network, co_purchase_counts, read_transactions_csv, write_edge_list_tsv,
    write_transactions_csv, BipartiteNetwork, CoPurchaseCounts, FrequencyFilter, TransactionRecord,
};
use basketnet::community::{
    calibrate, classify_roles, detect_communities, role_adjacency, write_calibration_trace_tsv,
    write_partition_json, write_role_adjacency_tsv, CalibrationGrids, CalibrationInput,
    CalibrationResult, DetectorConfig, Partition, WeightedGraph, DEFAULT_DOMINANCE_RATIO,
};
use basketnet::matrix::Matrix;
use basketnet::measures::{
    build_weighted_networks, write_dense_scores_tsv, write_scores_tsv, MeasureSpec, ScoreMatrix,
    WeightedNetworks,
};
use basketnet::null_models::{
    derive_relations, run_null_model, write_relations_tsv, NullModelSpec, RelationMatrices,
    SignificanceResult,
};
use basketnet::simulator::{generate, ground_truth, WorldSpec};
use basketnet::validation::{
    compare_roles, correlations, external_pair_rows, ingredient_partition, mww_test,
    read_flavour_csv, read_hierarchy_csv, read_matches_csv, read_recipes_tsv, recipe_pipeline,
    restrict_partition, role_category_profile, run_sales_engine, split_robustness,
    write_external_pairs_tsv, write_histogram_tsv, write_role_comparison_tsv,
    write_role_profile_tsv, write_split_report_tsv, Alternative, ExternalPairRow, PipelineSettings,
};

use crate::config::{self, Config};
use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = config::load(cli.config.as_deref())?;
    cfg.apply_flags(&cli)?;
    cfg.validate()?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring worker threads")?;
    }
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    // A lingering report from an earlier failed run would shadow this one.
    let _ = std::fs::remove_file(out.join("error.json"));
    write_manifest(&out, cli.command.name(), &cfg)?;

    let runner = Runner { cfg, out };
    match cli.command {
        Command::Simulate => runner.simulate_cmd()?,
        Command::Build => {
            runner.build_cmd()?;
        }
        Command::Relations => {
            runner.relations_cmd()?;
        }
        Command::Scores => {
            runner.scores_cmd()?;
        }
        Command::Roles => runner.roles_cmd()?,
        Command::Calibrate => {
            runner.calibrate_cmd()?;
        }
        Command::Validate => runner.validate_cmd()?,
        Command::Pipeline => runner.pipeline_cmd()?,
    }
    println!("{}: ok", cli.command.name());
    Ok(())
}

struct Runner {
    cfg: Config,
    out: PathBuf,
}

impl Runner {
    /// Run one stage against a staging directory; commit its files into
    /// the run directory on success, report and clean up on failure.
    fn stage_with<T>(
        &self,
        name: &str,
        f: impl FnOnce(&Path) -> Result<(Vec<String>, T)>,
    ) -> Result<T> {
        let staging = self.out.join(format!(".stage-{name}"));
        if staging.exists() {
            let _ = std::fs::remove_dir_all(&staging);
        }
        std::fs::create_dir_all(&staging)
            .with_context(|| format!("creating staging directory for stage {name}"))?;
        match f(&staging) {
            Ok((files, value)) => {
                for file in &files {
                    std::fs::rename(staging.join(file), self.out.join(file))
                        .with_context(|| format!("committing {file} from stage {name}"))?;
                }
                let _ = std::fs::remove_dir_all(&staging);
                println!("stage {name}: wrote {}", files.join(", "));
                Ok(value)
            }
            Err(e) => {
                let _ = std::fs::remove_dir_all(&staging);
                let report = serde_json::json!({
                    "stage": name,
                    "error": format!("{e:#}"),
                });
                let _ = std::fs::write(
                    self.out.join("error.json"),
                    serde_json::to_string_pretty(&report).unwrap_or_default(),
                );
                Err(e.context(format!("stage {name} failed")))
            }
        }
    }

    fn null_spec(&self) -> Result<NullModelSpec> {
        Ok(NullModelSpec::new(
            self.cfg.null_model.kind,
            self.cfg.null_model.alpha_m,
            self.cfg.null_model.alpha_l,
        )?)
    }

    fn measure_spec(&self) -> MeasureSpec {
        MeasureSpec {
            measure: self.cfg.measure.measure,
            q_c: self.cfg.measure.q_c,
            q_s: self.cfg.measure.q_s,
        }
    }

    fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            seed: self.cfg.detector.seed,
            n_trials: self.cfg.detector.n_trials.max(1),
        }
    }

    fn settings(&self) -> Result<PipelineSettings> {
        Ok(PipelineSettings {
            null: self.null_spec()?,
            measure: self.measure_spec(),
            detector: self.detector(),
        })
    }

    fn load_records(&self) -> Result<Vec<TransactionRecord>> {
        let path = self.cfg.io.transactions.as_ref().ok_or_else(|| {
            anyhow!(
                "no transactions input configured: set [io] transactions \
                 or generate data with `basketnet simulate`"
            )
        })?;
        require_exists(path, "transactions file")?;
        Ok(read_transactions_csv(path)?)
    }

    // ----- stages ----------------------------------------------------

    fn simulate_cmd(&self) -> Result<()> {
        self.stage_with("simulate", |dir| {
            let seed = self.cfg.simulate.seed.ok_or_else(|| {
                anyhow!("simulate needs a seed: pass --seed or set [simulate] seed")
            })?;
            let mut world = WorldSpec::with_seed(seed);
            world.n_transactions = self.cfg.simulate.n_transactions;
            let sim = generate(&world)?;
            write_transactions_csv(&dir.join("transactions.csv"), &sim.records)?;
            let truth = ground_truth();
            let truth_json = serde_json::json!({
                "seed": seed,
                "n_transactions": world.n_transactions,
                "dropped_empty": sim.dropped_empty,
                "complement_pairs": truth.complement_pairs,
                "substitute_pairs": truth.substitute_pairs,
                "groups": truth.groups,
                "independents": truth.independents,
            });
            write_json(&dir.join("ground_truth.json"), &truth_json)?;
            Ok((
                vec!["transactions.csv".into(), "ground_truth.json".into()],
                (),
            ))
        })
    }

    fn build_stage(&self, records: &[TransactionRecord]) -> Result<BipartiteNetwork> {
        self.stage_with("build", |dir| {
            let net = build_network(records, FrequencyFilter::default())?;
            write_network_stats(&dir.join("network_stats.tsv"), &net)?;
            write_edge_list_tsv(&dir.join("network_edges.tsv"), &net)?;
            Ok((
                vec!["network_stats.tsv".into(), "network_edges.tsv".into()],
                net,
            ))
        })
    }

    fn build_cmd(&self) -> Result<BipartiteNetwork> {
        let records = self.load_records()?;
        self.build_stage(&records)
    }

    fn relations_stage(
        &self,
        net: &BipartiteNetwork,
        cn: &CoPurchaseCounts,
        spec: NullModelSpec,
    ) -> Result<RelationMatrices> {
        self.stage_with("relations", |dir| {
            let scan = run_null_model(net, cn, &spec)?;
            let relations = derive_relations(&scan)?;
            write_relations_tsv(&dir.join("relations.tsv"), &relations, net.product_labels())?;
            write_significance_summary(&dir.join("significance.tsv"), &scan, &relations)?;
            Ok((
                vec!["relations.tsv".into(), "significance.tsv".into()],
                relations,
            ))
        })
    }

    fn relations_cmd(&self) -> Result<RelationMatrices> {
        let net = self.build_cmd()?;
        let cn = co_purchase_counts(&net);
        self.relations_stage(&net, &cn, self.null_spec()?)
    }

    fn scores_stage(
        &self,
        net: &BipartiteNetwork,
        relations: &RelationMatrices,
        measure: MeasureSpec,
    ) -> Result<WeightedNetworks> {
        self.stage_with("scores", |dir| {
            let weighted = build_weighted_networks(net, relations, &measure)?;
            let labels = net.product_labels();
            write_scores_tsv(&dir.join("wc_scores.tsv"), &weighted.wc.scores, labels)?;
            write_scores_tsv(&dir.join("ws_scores.tsv"), &weighted.ws.scores, labels)?;
            write_dense_scores_tsv(&dir.join("wc_dense.tsv"), &weighted.wc.scores, labels)?;
            write_dense_scores_tsv(&dir.join("ws_dense.tsv"), &weighted.ws.scores, labels)?;
            let thresholds = serde_json::json!({
                "theta_c": weighted.wc.theta,
                "theta_s": weighted.ws.theta,
                "clamped": {
                    "negative_numerators": weighted.clamp.negative_numerators,
                    "nonpositive_denominators": weighted.clamp.nonpositive_denominators,
                    "out_of_range": weighted.clamp.out_of_range,
                },
            });
            write_json(&dir.join("thresholds.json"), &thresholds)?;
            Ok((
                vec![
                    "wc_scores.tsv".into(),
                    "ws_scores.tsv".into(),
                    "wc_dense.tsv".into(),
                    "ws_dense.tsv".into(),
                    "thresholds.json".into(),
                ],
                weighted,
            ))
        })
    }

    fn scores_cmd(&self) -> Result<(BipartiteNetwork, WeightedNetworks)> {
        let net = self.build_cmd()?;
        let cn = co_purchase_counts(&net);
        let relations = self.relations_stage(&net, &cn, self.null_spec()?)?;
        let weighted = self.scores_stage(&net, &relations, self.measure_spec())?;
        Ok((net, weighted))
    }

    fn roles_stage(&self, net: &BipartiteNetwork, weighted: &WeightedNetworks) -> Result<()> {
        self.stage_with("roles", |dir| {
            let mut files = Vec::new();
            for (side, scores) in [("comp", &weighted.wc.scores), ("subs", &weighted.ws.scores)] {
                files.extend(self.role_artifacts(dir, side, scores, net.product_labels())?);
            }
            Ok((files, ()))
        })
    }

    fn role_artifacts(
        &self,
        dir: &Path,
        side: &str,
        scores: &ScoreMatrix,
        labels: &[String],
    ) -> Result<Vec<String>> {
        let graph = WeightedGraph::from_matrix(&scores.values);
        let detected = detect_communities(&graph, self.detector())?;
        let partition_file = format!("partition_{side}.json");
        write_partition_json(&dir.join(&partition_file), &detected.partition, labels)?;
        let roles = role_adjacency(&scores.values, &detected.partition)?;
        let adjacency_file = format!("role_adjacency_{side}.tsv");
        write_role_adjacency_tsv(&dir.join(&adjacency_file), &roles)?;
        let classes = classify_roles(&roles, DEFAULT_DOMINANCE_RATIO);
        let classes_json = serde_json::json!({
            "codelength": detected.codelength,
            "n_roles": detected.partition.n_roles(),
            "isolated": detected
                .isolated
                .iter()
                .map(|&i| labels[i as usize].clone())
                .collect::<Vec<_>>(),
            "roles": classes
                .iter()
                .enumerate()
                .map(|(r, class)| {
                    serde_json::json!({
                        "role": r,
                        "size": roles.sizes[r],
                        "class": class,
                    })
                })
                .collect::<Vec<_>>(),
        });
        let classes_file = format!("role_classes_{side}.json");
        write_json(&dir.join(&classes_file), &classes_json)?;
        let rankings_file = format!("rankings_{side}.tsv");
        write_rankings(&dir.join(&rankings_file), scores, labels, self.cfg.top_k)?;
        Ok(vec![
            partition_file,
            adjacency_file,
            classes_file,
            rankings_file,
        ])
    }

    fn roles_cmd(&self) -> Result<()> {
        let (net, weighted) = self.scores_cmd()?;
        self.roles_stage(&net, &weighted)
    }

    fn calibrate_stage(
        &self,
        net: &BipartiteNetwork,
        cn: &CoPurchaseCounts,
    ) -> Result<CalibrationResult> {
        self.stage_with("calibrate", |dir| {
            let cal = &self.cfg.calibration;
            let grids = CalibrationGrids {
                alpha_m: cal.alpha_m.clone(),
                alpha_l: cal.alpha_l.clone(),
                q_c: cal.q_c.clone(),
                q_s: cal.q_s.clone(),
            };
            let input = CalibrationInput {
                net,
                cn,
                null_kind: self.cfg.null_model.kind,
                measure: self.cfg.measure.measure,
                detector: self.detector(),
            };
            let result = calibrate(&input, &grids, self.cfg.baseline.to_core(), cal.nmi_floor)?;
            write_calibration_trace_tsv(&dir.join("calibration_trace.tsv"), &result)?;
            let selected = serde_json::json!({
                "alpha_m": result.alpha_m,
                "alpha_l": result.alpha_l,
                "q_c": result.q_c,
                "theta_c": result.theta_c,
                "q_s": result.q_s,
                "theta_s": result.theta_s,
                "fell_back": result.fell_back,
            });
            write_json(&dir.join("calibration_selected.json"), &selected)?;
            Ok((
                vec![
                    "calibration_trace.tsv".into(),
                    "calibration_selected.json".into(),
                ],
                result,
            ))
        })
    }

    fn calibrate_cmd(&self) -> Result<CalibrationResult> {
        let net = self.build_cmd()?;
        let cn = co_purchase_counts(&net);
        self.calibrate_stage(&net, &cn)
    }

    fn pipeline_cmd(&self) -> Result<()> {
        let records = self.load_records()?;
        let net = self.build_stage(&records)?;
        let cn = co_purchase_counts(&net);
        let selected = self.calibrate_stage(&net, &cn)?;
        let null =
            NullModelSpec::new(self.cfg.null_model.kind, selected.alpha_m, selected.alpha_l)?;
        let relations = self.relations_stage(&net, &cn, null)?;
        let measure = MeasureSpec {
            measure: self.cfg.measure.measure,
            q_c: selected.q_c,
            q_s: selected.q_s,
        };
        let weighted = self.scores_stage(&net, &relations, measure)?;
        self.roles_stage(&net, &weighted)
    }

    fn validate_cmd(&self) -> Result<()> {
        let io = &self.cfg.io;
        if io.matches.is_none() && io.hierarchy.is_none() && io.split_date.is_none() {
            println!(
                "validate: no external data configured (matches, hierarchy, split_date); skipping"
            );
            return Ok(());
        }
        let records = self.load_records()?;
        self.stage_with("validate", |dir| {
            let settings = self.settings()?;
            let world = run_sales_engine(&records, FrequencyFilter::default(), &settings)?;
            let labels: Vec<String> = world.net.product_labels().to_vec();
            let mut files: Vec<String> = Vec::new();

            let detect_side = |values: &Matrix| -> Result<Partition> {
                let graph = WeightedGraph::from_matrix(values);
                Ok(detect_communities(&graph, settings.detector)?.partition)
            };
            let sales_parts = if io.matches.is_some() || io.hierarchy.is_some() {
                Some((
                    detect_side(&world.weighted.wc.scores.values)?,
                    detect_side(&world.weighted.ws.scores.values)?,
                ))
            } else {
                None
            };

            if let Some(matches_path) = &io.matches {
                require_exists(matches_path, "matches file")?;
                let matches = read_matches_csv(matches_path)?;
                let compounds = match &io.flavour {
                    Some(p) => {
                        require_exists(p, "flavour file")?;
                        read_flavour_csv(p)?
                    }
                    None => Default::default(),
                };
                let recipes = match &io.recipes {
                    Some(p) => {
                        require_exists(p, "recipes file")?;
                        read_recipes_tsv(p)?
                    }
                    None => Vec::new(),
                };
                for (side, scores) in [
                    ("comp", &world.weighted.wc.scores),
                    ("subs", &world.weighted.ws.scores),
                ] {
                    let rows = external_pair_rows(&labels, scores, &matches, &compounds, &recipes)?;
                    let file = format!("external_{side}.tsv");
                    write_external_pairs_tsv(&dir.join(&file), &rows)?;
                    files.push(file);
                    files.extend(write_external_statistics(dir, side, &rows, io.all_pairs)?);
                }

                let (l0_labels, l0) = ingredient_partition(&matches);
                let mut col_parts: Vec<(String, Vec<String>, Partition)> =
                    vec![("same-ingredient".to_string(), l0_labels, l0)];
                if !recipes.is_empty() {
                    let lifted = recipe_pipeline(&recipes, &matches, &settings)?;
                    if lifted.products.len() >= 2 {
                        let subs = detect_side(&lifted.wsr.values)?;
                        let comp = detect_side(&lifted.wcr.values)?;
                        col_parts.push(("recipe-subs".to_string(), lifted.products.clone(), subs));
                        col_parts.push(("recipe-comp".to_string(), lifted.products, comp));
                    }
                }
                let mut common: BTreeSet<String> = labels.iter().cloned().collect();
                for (_, col_labels, _) in &col_parts {
                    let s: BTreeSet<&String> = col_labels.iter().collect();
                    common.retain(|l| s.contains(l));
                }
                if common.len() >= 2 {
                    let (sales_comp, sales_subs) = sales_parts
                        .as_ref()
                        .expect("partitions exist when matches do");
                    let (_, row_comp) = restrict_partition(&labels, sales_comp, &common);
                    let (_, row_subs) = restrict_partition(&labels, sales_subs, &common);
                    let restricted: Vec<(String, Partition)> = col_parts
                        .iter()
                        .map(|(name, col_labels, p)| {
                            (name.clone(), restrict_partition(col_labels, p, &common).1)
                        })
                        .collect();
                    let rows: Vec<(&str, &Partition)> =
                        vec![("sales-comp", &row_comp), ("sales-subs", &row_subs)];
                    let cols: Vec<(&str, &Partition)> = restricted
                        .iter()
                        .map(|(name, p)| (name.as_str(), p))
                        .collect();
                    let cmp = compare_roles(&rows, &cols)?;
                    write_role_comparison_tsv(&dir.join("role_comparison.tsv"), &cmp)?;
                    files.push("role_comparison.tsv".to_string());
                } else {
                    println!(
                        "validate: fewer than two products shared with external data; \
                         skipping role comparison"
                    );
                }
            }

            if let Some(hierarchy_path) = &io.hierarchy {
                require_exists(hierarchy_path, "hierarchy file")?;
                let hierarchy = read_hierarchy_csv(hierarchy_path)?;
                let (sales_comp, sales_subs) = sales_parts
                    .as_ref()
                    .expect("partitions exist when hierarchy does");
                for (side, part) in [("comp", sales_comp), ("subs", sales_subs)] {
                    for level in 1..=4u8 {
                        let profile = role_category_profile(&labels, part, &hierarchy, level)?;
                        let file = format!("role_profile_{side}_l{level}.tsv");
                        write_role_profile_tsv(&dir.join(&file), &profile)?;
                        files.push(file);
                    }
                }
            }

            if let Some(split_date) = &io.split_date {
                let report =
                    split_robustness(&records, split_date, FrequencyFilter::default(), &settings)?;
                write_split_report_tsv(&dir.join("split_report.tsv"), &report)?;
                files.push("split_report.tsv".to_string());
            }
            Ok((files, ()))
        })
    }
}

// ----- artifact writers ---------------------------------------------

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("{what} not found: {}", path.display());
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_network_stats(path: &Path, net: &BipartiteNetwork) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "key\tvalue")?;
    writeln!(out, "transactions\t{}", net.n_t())?;
    writeln!(out, "products\t{}", net.n_p())?;
    writeln!(out, "purchases\t{}", net.m())?;
    let density = net.m() as f64 / (net.n_t() as f64 * net.n_p() as f64);
    writeln!(out, "density\t{density:.9}")?;
    let summary = |xs: &[u32]| -> (u32, f64, u32) {
        let min = xs.iter().copied().min().unwrap_or(0);
        let max = xs.iter().copied().max().unwrap_or(0);
        let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / xs.len().max(1) as f64;
        (min, mean, max)
    };
    let (b_min, b_mean, b_max) = summary(net.d_t());
    writeln!(out, "basket_size_min\t{b_min}")?;
    writeln!(out, "basket_size_mean\t{b_mean:.9}")?;
    writeln!(out, "basket_size_max\t{b_max}")?;
    let (p_min, p_mean, p_max) = summary(net.d_p());
    writeln!(out, "product_frequency_min\t{p_min}")?;
    writeln!(out, "product_frequency_mean\t{p_mean:.9}")?;
    writeln!(out, "product_frequency_max\t{p_max}")?;
    out.flush()?;
    Ok(())
}

fn write_significance_summary(
    path: &Path,
    scan: &SignificanceResult,
    relations: &RelationMatrices,
) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "key\tvalue")?;
    writeln!(out, "pairs_more\t{}", scan.more.len())?;
    writeln!(out, "pairs_less\t{}", scan.less.len())?;
    writeln!(out, "pairs_comp\t{}", relations.a_comp.len())?;
    writeln!(out, "pairs_subs\t{}", relations.a_subs.len())?;
    writeln!(out, "skipped_products\t{}", scan.skipped_products.len())?;
    writeln!(out, "hub_flags\t{}", scan.hub_flags.len())?;
    out.flush()?;
    Ok(())
}

fn write_rankings(
    path: &Path,
    scores: &ScoreMatrix,
    labels: &[String],
    top_k: usize,
) -> Result<()> {
    use std::io::Write as _;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "query\trank\tpartner\tscore")?;
    let n = scores.values.n();
    for i in 0..n {
        let mut partners: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, scores.values.get(i, j)))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        partners.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("finite scores")
                .then_with(|| labels[a.0].cmp(&labels[b.0]))
        });
        for (rank, (j, score)) in partners.into_iter().take(top_k).enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{score:.9}",
                labels[i],
                rank + 1,
                labels[j]
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// For one score side, write correlation and rank-sum tables comparing
/// scores against each external statistic, plus histograms of the
/// external values among positively and zero-scored pairs.
fn write_external_statistics(
    dir: &Path,
    side: &str,
    rows: &[ExternalPairRow],
    all_pairs: bool,
) -> Result<Vec<String>> {
    use std::io::Write as _;
    let corr_file = format!("correlations_{side}.tsv");
    let mww_file = format!("mww_{side}.tsv");
    let mut corr_out = std::io::BufWriter::new(std::fs::File::create(dir.join(&corr_file))?);
    writeln!(
        corr_out,
        "statistic\tselection\tn\tpearson\tpearson_p\tspearman\tspearman_p"
    )?;
    let mut mww_out = std::io::BufWriter::new(std::fs::File::create(dir.join(&mww_file))?);
    writeln!(mww_out, "statistic\tn_positive\tn_zero\tu\tp_greater")?;
    let mut files = vec![corr_file, mww_file];
    for stat in ["rf", "rr"] {
        let pick = |row: &ExternalPairRow| if stat == "rf" { row.rf } else { row.rr };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut positive = Vec::new();
        let mut zero = Vec::new();
        for row in rows {
            if let Some(v) = pick(row) {
                if row.score > 0.0 {
                    positive.push(v);
                } else {
                    zero.push(v);
                }
                if all_pairs || row.score > 0.0 {
                    xs.push(row.score);
                    ys.push(v);
                }
            }
        }
        let selection = if all_pairs {
            "all-pairs"
        } else {
            "positive-scores"
        };
        match correlations(&xs, &ys) {
            Ok(c) => writeln!(
                corr_out,
                "{stat}\t{selection}\t{}\t{:.9}\t{:.9}\t{:.9}\t{:.9}",
                xs.len(),
                c.pearson,
                c.pearson_p,
                c.spearman,
                c.spearman_p
            )?,
            Err(_) => writeln!(
                corr_out,
                "{stat}\t{selection}\t{}\tNA\tNA\tNA\tNA",
                xs.len()
            )?,
        }
        if !positive.is_empty() && !zero.is_empty() {
            let r = mww_test(&positive, &zero, Alternative::Greater)?;
            writeln!(
                mww_out,
                "{stat}\t{}\t{}\t{:.9}\t{:.9}",
                positive.len(),
                zero.len(),
                r.u_statistic,
                r.p_value
            )?;
        } else {
            writeln!(
                mww_out,
                "{stat}\t{}\t{}\tNA\tNA",
                positive.len(),
                zero.len()
            )?;
        }
        for (group, values) in [("pos", &positive), ("zero", &zero)] {
            if !values.is_empty() {
                let file = format!("hist_{side}_{stat}_{group}.tsv");
                write_histogram_tsv(&dir.join(&file), values, 20)?;
                files.push(file);
            }
        }
    }
    corr_out.flush()?;
    mww_out.flush()?;
    Ok(files)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Record the resolved configuration, its hash, seeds, and versions, so
/// equal manifests imply equal outputs. No timestamps: reruns must be
/// byte-identical.
fn write_manifest(out: &Path, command: &str, cfg: &Config) -> Result<()> {
    let payload = serde_json::json!({ "command": command, "config": cfg });
    let canonical = serde_json::to_string(&payload)?;
    let manifest = serde_json::json!({
        "command": command,
        "config_hash": format!("{:016x}", fnv1a64(canonical.as_bytes())),
        "versions": { "tool": env!("CARGO_PKG_VERSION"), "artifact_format": 1 },
        "seeds": { "detector": cfg.detector.seed, "world": cfg.simulate.seed },
        "threads": cfg.threads,
        "top_k": cfg.top_k,
        "config": serde_json::to_value(cfg)?,
    });
    write_json(&out.join("manifest.json"), &manifest)
}
