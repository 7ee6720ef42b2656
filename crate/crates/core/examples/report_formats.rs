//! Driving the command layer from code: the same run rendered as CSV and JSON.

use gausshor::report::{execute, Format, RunConfig, Settings};

fn main() -> gausshor::Result<()> {
    let settings = Settings::from_toml_str(
        r#"
        command = "gauss-table"
        n = 15
        kind = "w"
        n0 = 3
        "#,
    )?;
    let cfg = RunConfig::resolve(settings)?;
    let out = execute(&cfg)?;
    print!("{}", out.document.render(Format::Csv));
    println!();
    print!("{}", out.document.render(Format::Json));
    Ok(())
}
