name = 'ccsbesr'
version = '0.3.0'
description = 'Stereo endoscopic image super-resolution with combined channel and spatial attention.'
url = 'https://github.com/ccsbesr/ccsbesr'
author = 'ccsbesr developers'
author_email = 'ccsbesr@users.noreply.github.com'
