use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use examforge::{
    cmd_churn, cmd_collect, cmd_comply, cmd_distribute_tests, cmd_grade, cmd_provision, cmd_watch, CmdError,
    CmdResult, Context, ExitStatus, SessionLock, SessionPaths, WatchOptions, Which,
};
use examforge_core::model::load_session_file;
use examforge_core::vcs::GitAdapter;
use examforge_core::ExamSession;

/// Exam assignment lifecycle: repositories, collection, testing, grading.
#[derive(Parser)]
#[command(name = "examforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SessionArgs {
    /// Session configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory of the session [default: <config dir>/<session_id>].
    #[arg(long)]
    session_dir: Option<PathBuf>,
    /// Where the bare git repositories live [default: <config dir>/repos].
    #[arg(long)]
    repo_root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Create one repository per student, hand out credentials, commit the initial project.
    Provision {
        #[command(flatten)]
        session: SessionArgs,
        /// Directory holding the initial project.
        #[arg(long)]
        project: PathBuf,
    },
    /// Publish the test artifact to the session's test repository.
    DistributeTests {
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Export the lab or home version of every project.
    Collect {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, value_enum)]
        which: Which,
    },
    /// Test collected versions, compute churn and write grades.csv.
    Grade {
        #[command(flatten)]
        session: SessionArgs,
        /// Parallel test executors [default: number of CPUs].
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Commit-process compliance over one or more sessions.
    Comply {
        /// Session configurations; repeat for several sessions.
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        repo_root: Option<PathBuf>,
        /// Output directory [default: session directory of the first config].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Churn between two directory trees, as CSV on stdout.
    Churn {
        before: PathBuf,
        after: PathBuf,
        /// Extra glob of paths to leave out; repeatable.
        #[arg(long = "ignore", value_name = "GLOB")]
        ignore: Vec<String>,
        /// Do not apply the built-in ignore globs.
        #[arg(long)]
        no_default_ignores: bool,
    },
    /// Test every new student commit and commit feedback into the repository.
    Watch {
        #[command(flatten)]
        session: SessionArgs,
        /// Seconds between polls.
        #[arg(long, default_value_t = 30)]
        interval: u64,
        /// Stop after this many polls.
        #[arg(long)]
        max_polls: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

fn config_dir(config: &Path) -> PathBuf {
    config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load(config: &Path) -> Result<ExamSession, CmdError> {
    load_session_file(config).map_err(|e| CmdError::Validation(format!("{}: {e}", config.display())))
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Loads the session, locks its directory and runs `f`.
fn with_session(args: &SessionArgs, f: impl FnOnce(&Context<'_>) -> CmdResult) -> CmdResult {
    let session = load(&args.config)?;
    let base = config_dir(&args.config);
    let root = args
        .session_dir
        .clone()
        .unwrap_or_else(|| base.join(&session.session_id));
    let adapter = GitAdapter::new(args.repo_root.clone().unwrap_or_else(|| base.join("repos")));
    let paths = SessionPaths::new(root);
    let _lock = SessionLock::acquire(&paths)?;
    f(&Context {
        session,
        paths,
        adapter: &adapter,
    })
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Provision { session, project } => with_session(&session, |ctx| cmd_provision(ctx, &project)),
        Command::DistributeTests { session } => with_session(&session, |ctx| {
            println!("{}", cmd_distribute_tests(ctx)?);
            Ok(ExitStatus::Success)
        }),
        Command::Collect { session, which } => with_session(&session, |ctx| cmd_collect(ctx, which)),
        Command::Grade { session, workers } => {
            let workers = workers.unwrap_or_else(default_workers);
            with_session(&session, |ctx| cmd_grade(ctx, workers))
        }
        Command::Comply { config, repo_root, out } => {
            let mut loaded = Vec::new();
            for path in &config {
                let base = config_dir(path);
                let session = load(path)?;
                let root = repo_root.clone().unwrap_or_else(|| base.join("repos"));
                let paths = SessionPaths::new(base.join(&session.session_id));
                loaded.push((session, paths, GitAdapter::new(root)));
            }
            let out = SessionPaths::new(out.unwrap_or_else(|| loaded[0].1.root.clone()));
            let _lock = SessionLock::acquire(&out)?;
            let contexts: Vec<Context<'_>> = loaded
                .iter()
                .map(|(session, paths, adapter)| Context {
                    session: session.clone(),
                    paths: paths.clone(),
                    adapter,
                })
                .collect();
            cmd_comply(&contexts, &out)
        }
        Command::Churn {
            before,
            after,
            ignore,
            no_default_ignores,
        } => {
            print!("{}", cmd_churn(&before, &after, &ignore, no_default_ignores)?);
            Ok(ExitStatus::Success)
        }
        Command::Watch {
            session,
            interval,
            max_polls,
            workers,
        } => {
            let options = WatchOptions {
                interval: Duration::from_secs(interval),
                max_polls,
                workers,
            };
            with_session(&session, |ctx| cmd_watch(ctx, &options))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { ExitStatus::ValidationError.code() as u8 } else { 0 });
        }
    };
    let status = match run(cli) {
        Ok(status) => status,
        Err(e) => {
            log::error!("{e}");
            e.status()
        }
    };
    ExitCode::from(status.code() as u8)
}
