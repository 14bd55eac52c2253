use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use powerdiag::diagram::{DiagramOptions, DomainMesh, PowerDiagram, SiteSet};
use powerdiag::io::{read_sites, write_sites};
use powerdiag::sampling::{blue_noise, white_noise};
use powerdiag::slicer::{slice_diagram, write_edge_list, write_polygon_soup, SliceSpec};
use powerdiag::transport::{optimize_sites, optimize_weights, LbfgsParams, QuantizeMode, TransportProblem};
use powerdiag::DensityField;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Distribution, MeshFormat, RunConfig};
use crate::CliError;

pub fn dispatch(config: &RunConfig) -> Result<(), CliError> {
    let mut config = config.clone();
    match config.command {
        "generate" => generate(&config),
        "diagram" => diagram(&mut config),
        "quantize" => quantize(&mut config),
        "sdot" => sdot(&mut config),
        "slice" => slice(&mut config),
        "bench" => bench(&config),
        other => Err(CliError::Usage(format!("unknown command {other}"))),
    }
}

fn file_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::File {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(file_err(path))
}

/// Buffered output to `path`, or stdout.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut w: Box<dyn Write>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Runtime(e.into()))
}

fn comments(config: &RunConfig, extra: &[String]) -> Vec<String> {
    let mut c = config.comment_lines();
    c.extend_from_slice(extra);
    c
}

fn write_comments(w: &mut dyn Write, lines: &[String]) -> Result<(), CliError> {
    for l in lines {
        writeln!(w, "# {l}").map_err(|e| CliError::Runtime(e.into()))?;
    }
    Ok(())
}

fn line(w: &mut dyn Write, s: String) -> Result<(), CliError> {
    writeln!(w, "{s}").map_err(|e| CliError::Runtime(e.into()))
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

/// Random sites for the configured distribution; the flag is false when
/// dart throwing stalled early.
fn generate_sites(config: &RunConfig, n: usize) -> Result<(SiteSet, Option<f64>, bool), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(match config.distribution {
        Distribution::White => (SiteSet::new(config.dim, white_noise(&mut rng, n, config.dim))?, None, true),
        Distribution::Blue => {
            let b = blue_noise(&mut rng, n, config.dim);
            (SiteSet::new(config.dim, b.points)?, Some(b.radius), b.complete)
        }
    })
}

/// Sites from `--sites-file` or freshly generated. A site file overrides
/// `--dim` and `--num-sites`.
fn load_sites(config: &mut RunConfig) -> Result<SiteSet, CliError> {
    let Some(path) = config.sites_file.clone() else {
        let (sites, _, complete) = generate_sites(config, config.num_sites)?;
        if !complete {
            eprintln!("warning: dart throwing stalled at {} of {} sites", sites.len(), config.num_sites);
        }
        return Ok(sites);
    };
    let file = File::open(&path).map_err(file_err(&path))?;
    let sites = read_sites(BufReader::new(file))?;
    if sites.dim() != config.dim {
        config.dim = sites.dim();
        config.density = DensityField::by_name(&config.density.kind().to_string(), config.dim)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    config.num_sites = sites.len();
    Ok(sites)
}

fn compute(config: &RunConfig, sites: &SiteSet, keep_cells: bool) -> Result<PowerDiagram, CliError> {
    let opts = DiagramOptions {
        order: config.order,
        keep_cells,
        ..DiagramOptions::default()
    };
    Ok(PowerDiagram::compute(sites, &DomainMesh::unit_cube(sites.dim())?, &config.density, &opts)?)
}

fn generate(config: &RunConfig) -> Result<(), CliError> {
    let (sites, radius, complete) = generate_sites(config, config.num_sites)?;
    let mut extra = Vec::new();
    if let Some(r) = radius {
        extra.push(format!("min_distance = {}", f(r)));
    }
    if !complete {
        extra.push(format!("stalled = {} of {}", sites.len(), config.num_sites));
        eprintln!("warning: dart throwing stalled at {} of {} sites", sites.len(), config.num_sites);
    }
    let out = output(config.out.as_deref())?;
    write_sites(out, &sites, false, &comments(config, &extra))?;
    Ok(())
}

fn timing_lines(d: &PowerDiagram) -> Vec<String> {
    let t = d.timings();
    vec![
        format!("t_vor = {:.6}", t.vor),
        format!("t_knn = {:.6}", t.knn),
        format!("t_tri = {:.6}", t.tri),
        format!("t_q = {:.6}", t.quad),
        format!("t_total = {:.6}", t.total),
    ]
}

fn diagram(config: &mut RunConfig) -> Result<(), CliError> {
    let sites = load_sites(config)?;
    let d = compute(config, &sites, false)?;
    let mut extra = vec![
        format!("cells = {}", d.len()),
        format!("empty_cells = {}", d.num_empty()),
        format!("total_mass = {}", f(d.total_mass())),
        format!("vertices = {}", d.total_vertices()),
        format!("facets = {}", d.total_facets()),
    ];
    extra.extend(timing_lines(&d));
    let mut out = output(config.out.as_deref())?;
    write_comments(&mut *out, &comments(config, &extra))?;
    let dim = sites.dim();
    let cols: Vec<String> = (0..dim).map(|k| format!("c{k}")).collect();
    line(&mut *out, format!("site mass {} vertices facets", cols.join(" ")))?;
    for (i, c) in d.cells().iter().enumerate() {
        let cen = c.centroid().unwrap_or_else(|| vec![f64::NAN; dim]);
        let cen: Vec<String> = cen.into_iter().map(f).collect();
        line(&mut *out, format!("{i} {} {} {} {}", f(c.mass()), cen.join(" "), c.num_vertices, c.num_facets))?;
    }
    finish(out)
}

fn out_dir(config: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = config.out.clone().expect("validated");
    fs::create_dir_all(&dir).map_err(file_err(&dir))?;
    Ok(dir)
}

fn write_slices(config: &RunConfig, sites: &SiteSet, target: SliceTarget) -> Result<Vec<PathBuf>, CliError> {
    if config.slices.is_empty() {
        return Ok(Vec::new());
    }
    let d = compute(config, sites, true)?;
    let ext = match config.format {
        MeshFormat::EdgeList => "edges.txt",
        MeshFormat::PolygonSoup => "soup.txt",
    };
    let mut written = Vec::new();
    for (k, chain) in config.slices.iter().enumerate() {
        let spec = SliceSpec::axis_chain(sites.dim(), chain).map_err(|e| CliError::Usage(e.to_string()))?;
        let mesh = slice_diagram(&d, &spec)?;
        let desc: Vec<String> = chain.iter().map(|(a, v)| format!("{a}={v}")).collect();
        let extra = vec![
            format!("slice = {}", desc.join(",")),
            format!("slice_cells = {}", mesh.cells.len()),
        ];
        let path = match &target {
            SliceTarget::Dir(dir) => Some(dir.join(format!("slice_{k}.{ext}"))),
            SliceTarget::File(None) => None,
            SliceTarget::File(Some(p)) if config.slices.len() == 1 => Some(p.clone()),
            SliceTarget::File(Some(p)) => {
                let stem = p.file_stem().map_or("slice".into(), |s| s.to_string_lossy().into_owned());
                let ext = p.extension().map_or("txt".into(), |s| s.to_string_lossy().into_owned());
                Some(p.with_file_name(format!("{stem}_{k}.{ext}")))
            }
        };
        let out = output(path.as_deref())?;
        let c = comments(config, &extra);
        match config.format {
            MeshFormat::EdgeList => write_edge_list(out, &mesh.to_edge_list(), &c)?,
            MeshFormat::PolygonSoup => write_polygon_soup(out, &mesh.to_polygon_soup(), &c)?,
        }
        written.extend(path);
    }
    Ok(written)
}

enum SliceTarget {
    Dir(PathBuf),
    File(Option<PathBuf>),
}

fn quantize(config: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(config)?;
    let sites = if config.sites_file.is_some() {
        load_sites(config)?
    } else {
        // the initial sample is always white noise
        let mut c = config.clone();
        c.distribution = Distribution::White;
        generate_sites(&c, config.num_sites)?.0
    };
    let result = optimize_sites(sites, &config.density, config.quantize_mode, config.iters, config.order)?;
    let mut extra = Vec::new();
    if let Some(stop) = result.stop {
        extra.push(format!("stop = {stop:?}"));
    }
    let c = comments(config, &extra);
    write_sites(create(&dir.join("sites.txt"))?, &result.sites, false, &c)?;

    let mut out: Box<dyn Write> = Box::new(create(&dir.join("convergence.txt"))?);
    write_comments(&mut *out, &c)?;
    line(&mut *out, "iteration calls energy grad_norm normalized_energy normalized_grad".into())?;
    for r in &result.log {
        line(
            &mut *out,
            format!(
                "{} {} {} {} {} {}",
                r.iteration,
                r.calls,
                f(r.energy),
                f(r.grad_norm),
                f(r.normalized_energy),
                f(r.normalized_grad)
            ),
        )?;
    }
    finish(out)?;
    write_slices(config, &result.sites, SliceTarget::Dir(dir.clone()))?;
    let last = result.log.last().expect("log starts with the initial state");
    println!(
        "{} sites, {} iterations, normalized energy {:.6e}, normalized gradient {:.6e}",
        result.sites.len(),
        last.iteration,
        last.normalized_energy,
        last.normalized_grad
    );
    Ok(())
}

fn sdot(config: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(config)?;
    let sites = if config.sites_file.is_some() {
        let s = load_sites(config)?;
        SiteSet::new(s.dim(), s.points().to_vec())?
    } else {
        let mut c = config.clone();
        c.distribution = Distribution::White;
        let initial = generate_sites(&c, config.num_sites)?.0;
        optimize_sites(initial, &config.density, QuantizeMode::Lbfgs, config.iters, config.order)?.sites
    };
    let n = sites.len();
    let mut problem = TransportProblem::new(sites, config.density.clone(), config.order)?;
    let m_t = problem.diagram()?.total_mass();
    problem.targets.iter_mut().for_each(|t| *t = m_t / n as f64);
    let params = LbfgsParams {
        max_calls: config.iters.max(1),
        ..LbfgsParams::default()
    };
    let result = optimize_weights(&problem, &params)?;
    let max_err = result.max_relative_error(&problem.targets);
    let extra = vec![
        format!("target_mass = {}", f(m_t / n as f64)),
        format!("stop = {:?}", result.stop),
        format!("max_relative_mass_error = {}", f(max_err)),
    ];
    let c = comments(config, &extra);
    write_sites(create(&dir.join("sites.txt"))?, &result.sites, true, &c)?;

    let mut out: Box<dyn Write> = Box::new(create(&dir.join("convergence.txt"))?);
    write_comments(&mut *out, &c)?;
    line(&mut *out, "iteration calls energy grad_norm min_mass median_mass max_mass".into())?;
    for r in &result.log {
        line(
            &mut *out,
            format!(
                "{} {} {} {} {} {} {}",
                r.iteration,
                r.calls,
                f(r.energy),
                f(r.grad_norm),
                f(r.min_mass),
                f(r.median_mass),
                f(r.max_mass)
            ),
        )?;
    }
    finish(out)?;

    let mut out: Box<dyn Write> = Box::new(create(&dir.join("masses.txt"))?);
    write_comments(&mut *out, &c)?;
    line(&mut *out, "site weight mass normalized_mass".into())?;
    let nu = m_t / n as f64;
    for (i, m) in result.masses.iter().enumerate() {
        line(&mut *out, format!("{i} {} {} {}", f(result.sites.weight(i)), f(*m), f(m / nu)))?;
    }
    finish(out)?;

    let last = result.log.last().expect("log starts with the initial state");
    println!(
        "{n} sites, {} iterations, {} calls, gradient norm {:.3e}, max relative mass error {max_err:.3e}",
        last.iteration, last.calls, last.grad_norm
    );
    if n <= 8 {
        let w: Vec<String> = result.sites.weights().iter().map(|w| format!("{w:.10}")).collect();
        println!("weights: {}", w.join(" "));
    }
    Ok(())
}

fn slice(config: &mut RunConfig) -> Result<(), CliError> {
    let sites = load_sites(config)?;
    let out = config.out.clone();
    write_slices(config, &sites, SliceTarget::File(out))?;
    Ok(())
}

fn bench(config: &RunConfig) -> Result<(), CliError> {
    let mut sizes = vec![(config.num_sites / 16).max(1), (config.num_sites / 4).max(1), config.num_sites];
    sizes.dedup();
    let mut out = output(config.out.as_deref())?;
    write_comments(&mut *out, &config.comment_lines())?;
    line(&mut *out, "distribution dim num_sites t_vor t_knn t_tri t_q t_total vertices facets".into())?;
    for dist in [Distribution::White, Distribution::Blue] {
        for &n in &sizes {
            let mut c = config.clone();
            c.distribution = dist;
            let (sites, _, complete) = generate_sites(&c, n)?;
            if !complete {
                eprintln!("warning: dart throwing stalled at {} of {n} sites", sites.len());
            }
            let d = compute(config, &sites, false)?;
            let t = d.timings();
            line(
                &mut *out,
                format!(
                    "{} {} {} {:.6} {:.6} {:.6} {:.6} {:.6} {} {}",
                    match dist {
                        Distribution::White => "white",
                        Distribution::Blue => "blue",
                    },
                    config.dim,
                    sites.len(),
                    t.vor,
                    t.knn,
                    t.tri,
                    t.quad,
                    t.total,
                    d.total_vertices(),
                    d.total_facets()
                ),
            )?;
        }
    }
    finish(out)
}
