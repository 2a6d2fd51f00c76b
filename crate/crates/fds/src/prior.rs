//! Prior flow sources for the training loop.

use std::cell::RefCell;
use std::path::{Path, PathBuf};

use fds_core::flow::FlowField;
use fds_core::oracle::{FlowPrior, GeometryOracle};
use fds_core::Camera;

use crate::io;

/// Reads precomputed `.flo` files, e.g. the output of a real matcher.
///
/// `ids[v]` maps the trainer's view index to the manifest view id used in
/// the file name.
#[derive(Debug)]
pub struct FileOracle {
    root: PathBuf,
    pattern: String,
    ids: Vec<usize>,
    missing: RefCell<Option<PathBuf>>,
}

impl FileOracle {
    pub fn new(root: &Path, pattern: &str, ids: Vec<usize>) -> Self {
        Self {
            root: root.to_path_buf(),
            pattern: pattern.to_string(),
            ids,
            missing: RefCell::new(None),
        }
    }

    pub fn path_for(&self, view_id: usize, iter: usize) -> PathBuf {
        let name = self
            .pattern
            .replace("{view}", &view_id.to_string())
            .replace("{iter}", &iter.to_string());
        self.root.join(name)
    }

    /// The last file that could not be read.
    pub fn missing(&self) -> Option<PathBuf> {
        self.missing.borrow().clone()
    }
}

impl FlowPrior for FileOracle {
    fn prior_flow(
        &self,
        view: usize,
        iter: usize,
        input: &Camera,
        _sampled: &Camera,
    ) -> fds_core::Result<FlowField> {
        let unavailable = fds_core::Error::PriorUnavailable { view, iter };
        let id = *self.ids.get(view).ok_or(unavailable.clone())?;
        let path = self.path_for(id, iter);
        match io::read_flo(&path) {
            Ok(f) => {
                f.vectors.ensure_shape((input.width, input.height))?;
                Ok(f)
            }
            Err(_) => {
                *self.missing.borrow_mut() = Some(path);
                Err(unavailable)
            }
        }
    }
}

#[derive(Debug)]
pub enum Prior {
    Geometry(GeometryOracle),
    File(FileOracle),
}

impl FlowPrior for Prior {
    fn prior_flow(
        &self,
        view: usize,
        iter: usize,
        input: &Camera,
        sampled: &Camera,
    ) -> fds_core::Result<FlowField> {
        match self {
            Prior::Geometry(o) => o.prior_flow(view, iter, input, sampled),
            Prior::File(o) => o.prior_flow(view, iter, input, sampled),
        }
    }
}
