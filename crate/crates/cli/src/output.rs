use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nsb_avoid::{metrics, run_all, Metrics, ScenarioFile};
use serde_json::{json, Value};

use crate::overrides::RunOverrides;
use crate::Failure;

pub struct RobotOutput {
    pub name: String,
    pub csv: String,
    pub metrics: Metrics,
}

/// Everything one run writes, held in memory until the run has succeeded.
pub struct RunOutput {
    pub label: Option<String>,
    pub scenario: String,
    pub controller: String,
    pub supervisor: String,
    pub robots: Vec<RobotOutput>,
    pub effective_config: Value,
}

impl RunOutput {
    pub fn compute(
        file: &ScenarioFile,
        ov: &RunOverrides,
        scenario_path: &Path,
    ) -> Result<Self, Failure> {
        let resolved = ov.apply(file)?;
        let scenario = resolved.build()?;
        let logs = run_all(&scenario)?;
        let robots = logs
            .iter()
            .map(|log| RobotOutput {
                name: log.robot_name.clone(),
                csv: log.to_csv_string(),
                metrics: metrics(log, &scenario),
            })
            .collect();
        Ok(Self {
            label: None,
            scenario: scenario.name.clone(),
            controller: scenario.controller.name().to_string(),
            supervisor: scenario.gains.supervisor.name().to_string(),
            robots,
            effective_config: ov.effective_config(&scenario_path.display().to_string(), &resolved),
        })
    }

    pub fn labelled(mut self, label: String) -> Self {
        self.label = Some(label);
        self
    }

    fn primary(&self) -> &Metrics {
        &self.robots[0].metrics
    }

    pub fn summary_line(&self) -> String {
        let m = self.primary();
        format!(
            "{} [{}/{}]: min_clearance {} max_path_deviation {:.4} return_time {} chattering {:.4} final_goal_error {:.2e}",
            self.scenario,
            self.controller,
            self.supervisor,
            opt(finite(m.min_clearance)),
            m.max_path_deviation,
            opt(m.return_time),
            m.chattering,
            m.final_goal_error
        )
    }

    fn metrics_json(&self) -> Value {
        let mut doc = json!({
            "scenario": self.scenario,
            "controller": self.controller,
            "supervisor": self.supervisor,
            "effective_config": self.effective_config,
            "metrics": self.primary(),
        });
        if self.robots.len() > 1 {
            doc["peers"] = self.robots[1..]
                .iter()
                .map(|r| json!({"name": r.name, "trajectory": csv_name(r, false), "metrics": r.metrics}))
                .collect();
        }
        doc
    }

    fn files(&self) -> Vec<(String, String)> {
        let mut files: Vec<(String, String)> = self
            .robots
            .iter()
            .enumerate()
            .map(|(i, r)| (csv_name(r, i == 0), r.csv.clone()))
            .collect();
        let metrics =
            serde_json::to_string_pretty(&self.metrics_json()).expect("metrics serialize");
        files.push(("metrics.json".into(), metrics + "\n"));
        files.push(("plot.gp".into(), plot_script(&self.scenario)));
        files
    }
}

fn csv_name(r: &RobotOutput, primary: bool) -> String {
    if primary {
        "trajectory.csv".into()
    } else {
        format!("trajectory_{}.csv", sanitize(&r.name))
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

/// Gnuplot commands reproducing the usual figures from `trajectory.csv`.
pub fn plot_script(title: &str) -> String {
    format!(
        r#"# gnuplot 5.4+: gnuplot plot.gp
set datafile separator ","
set datafile columnheaders
set terminal pngcairo size 900,600
set grid

set output "path.png"
set title "{title}: planned and executed path"
set xlabel "x [m]"
set ylabel "y [m]"
set size ratio -1
plot "trajectory.csv" using (column("x_d")):(column("y_d")) with lines dt 2 title "planned", \
     "" using (column("x")):(column("y")) with lines lw 2 title "executed"
set size noratio

set output "sigma.png"
set title "{title}: pseudo-energy and task weight"
set xlabel "t [s]"
set ylabel "sigma"
set y2label "lambda"
set y2tics
plot "trajectory.csv" using (column("t")):(column("sigma")) with lines title "sigma", \
     "" using (column("t")):(column("lambda")) axes x1y2 with lines title "lambda"
unset y2tics
unset y2label

set output "velocity.png"
set title "{title}: base velocity components"
set ylabel "[m/s]"
plot "trajectory.csv" using (column("t")):(column("qdot1")) with lines title "x", \
     "" using (column("t")):(column("qdot2")) with lines title "y"

set output "error.png"
set title "{title}: task error"
set ylabel "|x - x_d| [m]"
plot "trajectory.csv" using (column("t")):(sqrt((column("x")-column("x_d"))**2 + (column("y")-column("y_d"))**2 + (column("z")-column("z_d"))**2)) with lines title "error"
"#
    )
}

fn compare_script(outputs: &[RunOutput]) -> String {
    let mut s = String::from(
        "# gnuplot 5.4+: gnuplot compare.gp\nset datafile separator \",\"\nset datafile columnheaders\nset terminal pngcairo size 900,600\nset grid\nset output \"compare_path.png\"\nset size ratio -1\nset xlabel \"x [m]\"\nset ylabel \"y [m]\"\n",
    );
    let first = outputs[0].label.as_deref().unwrap_or("run");
    let _ = write!(
        s,
        "plot \"{first}/trajectory.csv\" using (column(\"x_d\")):(column(\"y_d\")) with lines dt 2 title \"planned\""
    );
    for o in outputs {
        let label = o.label.as_deref().unwrap_or("run");
        let _ = write!(
            s,
            ", \\\n     \"{label}/trajectory.csv\" using (column(\"x\")):(column(\"y\")) with lines lw 2 title \"{label}\""
        );
    }
    s.push('\n');
    s
}

pub fn comparison_table(outputs: &[RunOutput]) -> String {
    let mut s = String::from(
        "controller,min_clearance,max_path_deviation,return_time,chattering,final_goal_error\n",
    );
    for o in outputs {
        let m = o.primary();
        let _ = writeln!(
            s,
            "{},{},{:.6},{},{:.6},{:.6e}",
            o.label.as_deref().unwrap_or(&o.controller),
            finite(m.min_clearance).map_or("".into(), |v| format!("{v:.6}")),
            m.max_path_deviation,
            m.return_time.map_or("".into(), |v| format!("{v:.3}")),
            m.chattering,
            m.final_goal_error
        );
    }
    s
}

/// Writes every file or none: files are staged in a scratch directory next
/// to `out` and moved in once all of them are on disk.
pub fn write_outputs(
    out: &Path,
    outputs: &[RunOutput],
    table: Option<&str>,
) -> Result<(), Failure> {
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    match table {
        None => {
            for (name, body) in outputs[0].files() {
                files.push((PathBuf::from(name), body));
            }
        }
        Some(table) => {
            for o in outputs {
                let dir = PathBuf::from(o.label.clone().unwrap_or_else(|| o.controller.clone()));
                for (name, body) in o.files() {
                    files.push((dir.join(name), body));
                }
            }
            files.push((PathBuf::from("comparison.csv"), table.to_string()));
            files.push((PathBuf::from("compare.gp"), compare_script(outputs)));
        }
    }

    let existed = out.exists();
    fs::create_dir_all(out)?;
    let staging = out.join(format!(".staging-{}", std::process::id()));
    let result = stage_and_commit(out, &staging, &files);
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
        if !existed {
            let _ = fs::remove_dir_all(out);
        }
    }
    result.map_err(Failure::from)
}

fn stage_and_commit(
    out: &Path,
    staging: &Path,
    files: &[(PathBuf, String)],
) -> std::io::Result<()> {
    for (rel, body) in files {
        let path = staging.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, body)?;
    }
    for (rel, _) in files {
        let target = out.join(rel);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::rename(staging.join(rel), target)?;
    }
    fs::remove_dir_all(staging)
}
