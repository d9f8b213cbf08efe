//! WebAssembly bindings for the demo page in `www/`.
//!
//! Three interactive pieces: stepping CMA-ES on a 2-D test function, the
//! diffusion KDE with an adjustable mesh, and the builtin search-space
//! transforms.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// CMA-ES on a 2-D benchmark, advanced one generation per [`CmaDemo::step`].
#[wasm_bindgen]
pub struct CmaDemo {
    inner: demo::Stepper,
}

#[wasm_bindgen]
impl CmaDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(benchmark: &str, lambda: usize, seed: u64) -> Result<CmaDemo, JsError> {
        demo::Stepper::new(benchmark, lambda, seed).map(|inner| CmaDemo { inner }).map_err(js)
    }

    /// Evaluates one generation; returns its points as `x0, y0, x1, y1, …`.
    pub fn step(&mut self) -> Result<Vec<f64>, JsError> {
        self.inner.step().map_err(js)
    }

    pub fn mean(&self) -> Vec<f64> {
        self.inner.state.mean().as_slice().to_vec()
    }

    pub fn axes(&self) -> Vec<f64> {
        self.inner.axes()
    }

    pub fn sigma(&self) -> f64 {
        self.inner.state.sigma()
    }

    pub fn generation(&self) -> u64 {
        self.inner.state.generation()
    }

    pub fn evaluations(&self) -> u64 {
        self.inner.state.eval_count()
    }

    pub fn best(&self) -> f64 {
        self.inner.best
    }

    pub fn best_point(&self) -> Vec<f64> {
        self.inner.best_x.clone()
    }

    pub fn optimum(&self) -> Vec<f64> {
        self.inner.bench.optimum().0
    }
}

#[wasm_bindgen]
pub fn benchmark_grid(benchmark: &str, n: usize) -> Result<Vec<f64>, JsError> {
    demo::grid(benchmark, n).map_err(js)
}

#[wasm_bindgen]
pub fn mixture_samples(n: usize, seed: u64) -> Vec<f64> {
    demo::mixture_samples(n, seed)
}

#[wasm_bindgen]
pub fn mixture_pdf(x: f64) -> f64 {
    demo::mixture_pdf(x)
}

/// Result of [`estimate_density`].
#[wasm_bindgen]
pub struct Density {
    mesh: Vec<f64>,
    density: Vec<f64>,
    bandwidth: f64,
    warning: String,
}

#[wasm_bindgen]
impl Density {
    pub fn mesh(&self) -> Vec<f64> {
        self.mesh.clone()
    }

    pub fn density(&self) -> Vec<f64> {
        self.density.clone()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn warning(&self) -> String {
        self.warning.clone()
    }
}

#[wasm_bindgen]
pub fn estimate_density(samples: &[f64], mesh_points: usize) -> Result<Density, JsError> {
    let e = demo::estimate(samples, mesh_points).map_err(js)?;
    Ok(Density {
        bandwidth: e.bandwidth(),
        warning: demo::warning_text(e.warning),
        mesh: e.mesh,
        density: e.density,
    })
}

#[wasm_bindgen]
pub fn space_dims(tag: &str) -> Result<Vec<String>, JsError> {
    demo::describe_space(tag).map_err(js)
}

#[wasm_bindgen]
pub fn transform_value(tag: &str, index: usize, x: f64) -> Result<f64, JsError> {
    demo::value(tag, index, x).map_err(js)
}

#[wasm_bindgen]
pub fn transform_curve(tag: &str, index: usize, n: usize) -> Result<Vec<f64>, JsError> {
    demo::curve(tag, index, n).map_err(js)
}
